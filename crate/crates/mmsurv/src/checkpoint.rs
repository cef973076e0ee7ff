//! Text checkpoints.
//!
//! ```text
//! mmsurv-checkpoint 1
//! tool mmsurv 0.1.0
//! config <sha256>
//! seed 3
//! dims <patch_dim> <pathway_dim> <hidden> <latent> <bins>
//! bin_edges <B-1 values>
//! tensor <name> <rows> <cols>
//! <one line of values per row>
//! ...
//! end
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so a save/load round trip is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mmsurv_core::fusion::{BackboneDims, BackboneParams};
use mmsurv_core::Tensor;

use crate::error::{Error, Result};
use crate::TOOL_VERSION;

const MAGIC: &str = "mmsurv-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub seed: u64,
    pub params: BackboneParams,
    /// Survival bin edges fitted on the source domain.
    pub bin_edges: Vec<f64>,
}

fn floats(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:?}");
    }
    s
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let d = self.params.dims;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "tool {TOOL_VERSION}");
        let _ = writeln!(out, "config {}", self.config_hash);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(
            out,
            "dims {} {} {} {} {}",
            d.patch_dim, d.pathway_dim, d.hidden, d.latent, d.bins
        );
        let _ = writeln!(out, "bin_edges {}", floats(&self.bin_edges));
        for (name, t) in self.params.named() {
            let (r, c) = t.dims2("checkpoint").expect("parameters are matrices");
            let _ = writeln!(out, "tensor {name} {r} {c}");
            for row in t.data().chunks(c) {
                let _ = writeln!(out, "{}", floats(row));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("truncated before {what}")))
        };
        if next("magic")? != MAGIC {
            return Err(bad("not a version-1 checkpoint".into()));
        }
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| {
                    r.strip_prefix(' ')
                        .or(if r.is_empty() { Some("") } else { None })
                })
                .map(str::to_string)
                .ok_or_else(|| Error::Checkpoint(format!("expected `{key}`, found `{line}`")))
        };
        field(next("tool")?, "tool")?;
        let config_hash = field(next("config")?, "config")?;
        let seed = field(next("seed")?, "seed")?
            .parse()
            .map_err(|_| bad("bad seed".into()))?;
        let dims: Vec<usize> = field(next("dims")?, "dims")?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad(format!("bad dimension `{s}`"))))
            .collect::<Result<_>>()?;
        let [patch_dim, pathway_dim, hidden, latent, bins] = dims[..] else {
            return Err(bad("dims needs five values".into()));
        };
        let bin_edges = parse_floats(&field(next("bin_edges")?, "bin_edges")?)?;
        if bin_edges.len() + 1 != bins {
            return Err(bad(format!(
                "{} bin edges for {bins} bins",
                bin_edges.len()
            )));
        }
        let dims = BackboneDims {
            patch_dim,
            pathway_dim,
            hidden,
            latent,
            bins,
        };
        // Shapes come from a freshly initialised model of the same widths.
        let mut params = BackboneParams::init(dims, &mut mmsurv_core::rng::stream(0, 0))?;
        for (name, t) in params.named_mut() {
            let head = field(next("tensor")?, "tensor")?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            let [got, r, c] = parts[..] else {
                return Err(bad(format!("malformed tensor header `{head}`")));
            };
            let (want_r, want_c) = t.dims2("checkpoint")?;
            if got != name || r != want_r.to_string() || c != want_c.to_string() {
                return Err(bad(format!(
                    "expected tensor {name} {want_r}x{want_c}, found `{head}`"
                )));
            }
            let mut data = Vec::with_capacity(want_r * want_c);
            for _ in 0..want_r {
                let row = parse_floats(next(name)?)?;
                if row.len() != want_c {
                    return Err(bad(format!("tensor {name}: row of {} values", row.len())));
                }
                data.extend(row);
            }
            *t = Tensor::matrix(want_r, want_c, data)?;
        }
        if next("end")? != "end" {
            return Err(bad("missing end marker".into()));
        }
        Ok(Self {
            config_hash,
            seed,
            params,
            bin_edges,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|s| {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad value `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Checkpoint(format!("non-finite value `{s}`")))
            }
        })
        .collect()
}
