use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Subcommand};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use gopctl_core::dvmp::{apply_skip, decide_mask, MaskMode};
use gopctl_core::entropy::{decode_tensor, encode_tensor_with_mode, estimate_rate};
use gopctl_core::seed::{stream_rng, Stream};
use gopctl_core::{Bitstream, Dims, GaussianPrior, MaskPolicy, QuantizedLatent};

use crate::report::{write_json, write_text};
use crate::{Globals, UsageError};

#[derive(Debug, Subcommand)]
pub enum CodecCommand {
    /// Write a random latent and matching prior
    Gen(GenArgs),
    /// Encode a latent and verify the round trip
    Encode(EncodeArgs),
    /// Decode a bitstream back to symbols
    Decode(DecodeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Tensor shape as channels,height,width
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long)]
    pub latent: PathBuf,
    #[arg(long)]
    pub prior: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub latent: PathBuf,
    #[arg(long)]
    pub prior: PathBuf,
    /// scale:<threshold>, greedy:<bits> or external:<mask file>
    #[arg(long, default_value = "scale:0.5")]
    pub mask_policy: String,
    /// Bitstream output
    #[arg(long)]
    pub out: PathBuf,
    /// Per-cell keep fractions as CSV
    #[arg(long)]
    pub mask_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub bitstream: PathBuf,
    #[arg(long)]
    pub prior: PathBuf,
    /// Policy used at encode time; required for implicit-mode streams
    #[arg(long)]
    pub mask_policy: Option<String>,
    /// Decoded latent JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct LatentFile {
    dims: Dims,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriorFile {
    dims: Dims,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_prior(path: &Path) -> Result<GaussianPrior> {
    let p: PriorFile = read_json(path)?;
    Ok(GaussianPrior::new(p.dims, p.mean, p.scale)?)
}

fn parse_policy(s: &str) -> Result<MaskPolicy> {
    s.parse().map_err(|e| UsageError(format!("--mask-policy: {e}")).into())
}

pub fn run(g: &Globals, cmd: CodecCommand) -> Result<()> {
    match cmd {
        CodecCommand::Gen(a) => gen(g, a),
        CodecCommand::Encode(a) => encode(a),
        CodecCommand::Decode(a) => decode(a),
    }
}

fn gen(g: &Globals, a: GenArgs) -> Result<()> {
    if a.dims.len() != 3 {
        bail!(UsageError(format!("--dims needs 3 values, got {}", a.dims.len())));
    }
    let dims = Dims::new(a.dims[0], a.dims[1], a.dims[2]);
    let mut rng = stream_rng(g.seed, Stream::Data);
    let n = dims.len();
    let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    let scale: Vec<f64> = (0..n).map(|_| 2f64.powf(rng.random_range(-4.0..3.0))).collect();
    let values = mean
        .iter()
        .zip(&scale)
        .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    write_json(&a.latent, &LatentFile { dims, values })?;
    write_json(&a.prior, &PriorFile { dims, mean, scale })?;
    println!("generated {dims} latent");
    Ok(())
}

fn encode(a: EncodeArgs) -> Result<()> {
    let policy = parse_policy(&a.mask_policy)?;
    let latent_file: LatentFile = read_json(&a.latent)?;
    let latent = QuantizedLatent::quantize(latent_file.dims, &latent_file.values)?;
    let prior = read_prior(&a.prior)?;
    let mask = decide_mask(&prior, Some(&latent), &policy)?;
    let bs = encode_tensor_with_mode(&latent, &prior, &mask, policy.mode)?;
    let bytes = bs.to_bytes();
    std::fs::write(&a.out, &bytes).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(csv) = &a.mask_csv {
        write_text(csv, &mask.to_csv())?;
    }

    let reread = Bitstream::from_bytes(&bytes)?;
    let decoder_mask = match policy.mode {
        MaskMode::Implicit => Some(decide_mask(&prior, None, &policy)?),
        MaskMode::Explicit => None,
    };
    let decoded = decode_tensor(&reread, &prior, decoder_mask.as_ref())?;
    ensure!(
        decoded == apply_skip(&latent, &prior, &mask)?,
        "round-trip check failed: decoded symbols differ from the encoder reconstruction"
    );
    println!(
        "payload_bits={} file_bytes={} estimate={:.1} kept={}/{} round-trip=ok",
        bs.payload_bits(),
        bytes.len(),
        estimate_rate(&latent, &prior, &mask)?,
        mask.kept_count(),
        mask.dims().len()
    );
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let bytes = std::fs::read(&a.bitstream).with_context(|| format!("reading {}", a.bitstream.display()))?;
    let bs = Bitstream::from_bytes(&bytes)?;
    let prior = read_prior(&a.prior)?;
    let mask = match (bs.mode, &a.mask_policy) {
        (MaskMode::Explicit, _) => None,
        (MaskMode::Implicit, Some(p)) => {
            let policy = parse_policy(p)?;
            if !policy.is_implicit() {
                bail!(UsageError(format!("stream is implicit-mode but policy {policy} is explicit")));
            }
            Some(decide_mask(&prior, None, &policy)?)
        }
        (MaskMode::Implicit, None) => bail!(UsageError("implicit-mode stream needs --mask-policy".into())),
    };
    let latent = decode_tensor(&bs, &prior, mask.as_ref())?;
    let dims = latent.dims();
    let values = latent.symbols().iter().map(|&s| s as f64).collect();
    write_json(&a.out, &LatentFile { dims, values })?;
    println!("decoded {dims} latent");
    Ok(())
}
