//! Text model format.
//!
//! ```text
//! gestureprint-model 1
//! config {"point_count":64,...}
//! blocks 42
//! param sa1.s0.l0.weight 5 16
//! <rows lines of cols values, 17 significant digits>
//! ...
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{GesIDNetConfig, ModelParams, ParamBlock};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: &str = "1";
const MAGIC: &str = "gestureprint-model";

pub fn render_model<T: Scalar>(cfg: &GesIDNetConfig, params: &ModelParams<T>) -> Result<String> {
    params.check_shapes(cfg)?;
    let mut out = String::new();
    let config = serde_json::to_string(cfg).map_err(|e| Error::Io(e.to_string()))?;
    let _ = writeln!(out, "{MAGIC} {MODEL_FORMAT_VERSION}");
    let _ = writeln!(out, "config {config}");
    let _ = writeln!(out, "blocks {}", params.blocks.len());
    for b in &params.blocks {
        let _ = writeln!(out, "param {} {} {}", b.name, b.rows, b.cols);
        for row in b.data.chunks(b.cols.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{:.16e}", v.as_f64())).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn save_model<T: Scalar>(path: impl AsRef<Path>, cfg: &GesIDNetConfig, params: &ModelParams<T>) -> Result<()> {
    std::fs::write(path, render_model(cfg, params)?)?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.last + 1, msg: msg.into() }
    }

    fn keyword(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::Parse { line: self.last, msg: format!("expected `{key}`") })
    }
}

/// Parses a model document, checking parameter shapes against its own config.
pub fn parse_model<T: Scalar>(text: &str) -> Result<(GesIDNetConfig, ModelParams<T>)> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let version = lines.keyword(MAGIC)?;
    if version.trim() != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version.trim().into(), expected: MODEL_FORMAT_VERSION.into() });
    }
    let cfg: GesIDNetConfig = serde_json::from_str(lines.keyword("config")?).map_err(|e| Error::Parse { line: lines.last, msg: e.to_string() })?;
    let count: usize = lines.keyword("blocks")?.trim().parse().map_err(|_| lines.err("bad block count"))?;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let header: Vec<&str> = lines.keyword("param")?.split_whitespace().collect();
        let [name, rows, cols] = header[..] else {
            return Err(Error::Parse { line: lines.last, msg: "expected `param <name> <rows> <cols>`".into() });
        };
        let rows: usize = rows.parse().map_err(|_| Error::Parse { line: lines.last, msg: "bad row count".into() })?;
        let cols: usize = cols.parse().map_err(|_| Error::Parse { line: lines.last, msg: "bad column count".into() })?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next()?;
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse { line: lines.last, msg: format!("bad number {tok:?}") })?;
                data.push(T::lit(v));
            }
            if data.len() - before != cols {
                return Err(Error::Parse { line: lines.last, msg: format!("expected {cols} values") });
            }
        }
        blocks.push(ParamBlock { name: name.to_string(), rows, cols, data });
    }
    if lines.next()? != "end" {
        return Err(Error::Parse { line: lines.last, msg: "expected `end`".into() });
    }
    let params = ModelParams { blocks };
    params.check_shapes(&cfg)?;
    Ok((cfg, params))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<(GesIDNetConfig, ModelParams<T>)> {
    parse_model(&std::fs::read_to_string(path)?)
}

/// Loads a model and rejects it unless it was saved with exactly `cfg`.
pub fn load_model_expecting<T: Scalar>(path: impl AsRef<Path>, cfg: &GesIDNetConfig) -> Result<ModelParams<T>> {
    let (found, params) = load_model(path)?;
    if &found != cfg {
        return Err(Error::ShapeMismatch(format!("model was saved with a different configuration: {found:?}")));
    }
    Ok(params)
}
