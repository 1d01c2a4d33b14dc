//! On-disk MLP parameters.
//!
//! Binary layout (little endian):
//!
//! ```text
//! b"LGMLP\0\0\x01"            8-byte magic + version
//! u32 n_widths, u32 × n_widths
//! u64 seed
//! u64 n_params, f64 × n_params  (layer-major; row-major W then b)
//! ```
//!
//! CSV layout: `# widths=3,16,2`, `# seed=42`, then one value per line in
//! 17-significant-digit scientific notation.

use std::io::{BufRead, Read, Write};

use super::{Dynamics, MlpField, ParamVec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LGMLP\0\0\x01";

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub widths: Vec<usize>,
    pub seed: u64,
    pub params: ParamVec,
}

impl MlpWeights {
    pub fn new(field: &MlpField, seed: u64, params: ParamVec) -> Result<Self> {
        if params.len() != field.dim_params() {
            return Err(Error::Dimension {
                what: "parameters",
                expected: field.dim_params(),
                got: params.len(),
            });
        }
        Ok(MlpWeights {
            widths: field.widths().to_vec(),
            seed,
            params,
        })
    }

    pub fn field(&self) -> Result<MlpField> {
        let f = MlpField::from_widths(self.widths.clone())?;
        if f.dim_params() != self.params.len() {
            return Err(Error::Format(format!(
                "{} parameters do not fit widths {:?}",
                self.params.len(),
                self.widths
            )));
        }
        Ok(f)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.widths.len() as u32).to_le_bytes())?;
        for &width in &self.widths {
            w.write_all(&(width as u32).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in self.params.iter() {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let n_widths = read_u32(&mut r)? as usize;
        if n_widths > 1 << 16 {
            return Err(Error::Format(format!("implausible width count {n_widths}")));
        }
        let widths = (0..n_widths)
            .map(|_| read_u32(&mut r).map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let seed = read_u64(&mut r)?;
        let n_params = read_u64(&mut r)? as usize;
        let expected: usize = widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        if n_params != expected {
            return Err(Error::Format(format!(
                "header declares {n_params} parameters, widths imply {expected}"
            )));
        }
        let mut params = Vec::with_capacity(n_params);
        let mut buf = [0u8; 8];
        for _ in 0..n_params {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated parameter block".into()))?;
            params.push(f64::from_le_bytes(buf));
        }
        let weights = MlpWeights {
            widths,
            seed,
            params: ParamVec::new(params),
        };
        weights.field()?;
        Ok(weights)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let widths: Vec<String> = self.widths.iter().map(|x| x.to_string()).collect();
        writeln!(w, "# widths={}", widths.join(","))?;
        writeln!(w, "# seed={}", self.seed)?;
        for p in self.params.iter() {
            writeln!(w, "{p:.16e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut widths = None;
        let mut seed = None;
        let mut params = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("bad header line `{line}`")))?;
                match key.trim() {
                    "widths" => {
                        let parsed = value
                            .split(',')
                            .map(|s| s.trim().parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| Error::Format(format!("widths: {e}")))?;
                        widths = Some(parsed);
                    }
                    "seed" => {
                        seed = Some(
                            value
                                .trim()
                                .parse::<u64>()
                                .map_err(|e| Error::Format(format!("seed: {e}")))?,
                        );
                    }
                    other => return Err(Error::Format(format!("unknown header key `{other}`"))),
                }
                continue;
            }
            params.push(
                line.parse::<f64>()
                    .map_err(|e| Error::Format(format!("value `{line}`: {e}")))?,
            );
        }
        let weights = MlpWeights {
            widths: widths.ok_or_else(|| Error::Format("missing widths header".into()))?,
            seed: seed.ok_or_else(|| Error::Format("missing seed header".into()))?,
            params: ParamVec::new(params),
        };
        weights.field()?;
        Ok(weights)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u64::from_le_bytes(b))
}
