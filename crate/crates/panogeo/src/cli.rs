//! Command-line surface tying the kernels together.
//!
//! Every subcommand is referentially transparent: identical input files
//! and flags produce byte-identical outputs, whether those are PFM
//! payloads or canonical JSON reports. Reports name their command, echo
//! the parameters, identify input files by an FNV-1a digest of their
//! payload bytes, and always carry the tool version.
//!
//! Exit codes: 0 on success (including `--help` and `--version`), 2 on a
//! usage error, 3 on any data, format, or file error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::demo::{DemoConfig, run_demo};
use crate::loss::{gradient_check, ssi_align, total_loss};
use crate::mat::Mat;
use crate::metrics::evaluate;
use crate::pfm::{PfmImage, encode_pfm, parse_pfm_with_offset};
use crate::priors::{WindowSpec, cle_window_distances, gspe_matrix};
use crate::remap::{brp, brp_inverse, circular_rotate, circular_rotate_inverse};
use crate::report::{JsonValue, fnv1a64_hex, to_canonical_json};
use crate::sphere::GridShape;
use crate::tensor::{DepthMap, ErpTensor};
use crate::{Error, Result, loss::apply_align};

/// Step width for the finite-difference gradient comparison. The loss is
/// piecewise linear in each pixel, so a wider step adds no truncation
/// error while dividing cancellation noise; this width keeps the check
/// accurate even when the fitted scale, and with it every gradient
/// component, is small.
const GRAD_CHECK_STEP: f64 = 1e-5;

#[derive(Parser)]
#[command(
    name = "panogeo",
    version,
    about = "Spherical geometry kernels for panoramic depth estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-project a panorama so the poles land on the equator (or back).
    Brp {
        /// Input PFM image.
        #[arg(long = "in", value_name = "PFM")]
        input: PathBuf,
        /// Output PFM image.
        #[arg(long, value_name = "PFM")]
        out: PathBuf,
        /// Apply the inverse mapping instead.
        #[arg(long)]
        inverse: bool,
    },
    /// Rotate a panorama by whole columns with wraparound.
    Rotate {
        /// Input PFM image.
        #[arg(long = "in", value_name = "PFM")]
        input: PathBuf,
        /// Output PFM image.
        #[arg(long, value_name = "PFM")]
        out: PathBuf,
        /// Column shift; negative rotates the other way.
        #[arg(long, allow_negative_numbers = true)]
        cols: i64,
        /// Apply the inverse rotation instead.
        #[arg(long)]
        inverse: bool,
    },
    /// Dump the within-window spherical distance table for one window row.
    Cle {
        /// Grid height in pixels.
        #[arg(long)]
        height: usize,
        /// Grid width in pixels.
        #[arg(long)]
        width: usize,
        /// Window side in pixels.
        #[arg(long)]
        window: usize,
        /// Window row index, counted from the top.
        #[arg(long)]
        row: usize,
        /// Report destination: a path, or "-" for stdout.
        #[arg(long, value_name = "PATH|-")]
        json: String,
    },
    /// Dump the all-pairs spherical distance matrix for a coarse grid.
    Gspe {
        /// Grid height in pixels.
        #[arg(long)]
        height: usize,
        /// Grid width in pixels.
        #[arg(long)]
        width: usize,
        /// Report destination: a path, or "-" for stdout.
        #[arg(long, value_name = "PATH|-")]
        json: String,
    },
    /// Fit the least-squares scale and shift of a prediction onto ground truth.
    Align {
        /// Predicted depth map (PFM).
        #[arg(long, value_name = "PFM")]
        pred: PathBuf,
        /// Ground-truth depth map (PFM); zeros mark invalid pixels.
        #[arg(long, value_name = "PFM")]
        gt: PathBuf,
        /// Optional destination for the aligned prediction.
        #[arg(long, value_name = "PFM")]
        out: Option<PathBuf>,
        /// Report destination: a path, or "-" for stdout.
        #[arg(long, value_name = "PATH|-")]
        json: String,
    },
    /// Evaluate depth-accuracy metrics of a prediction against ground truth.
    Eval {
        /// Predicted depth map (PFM).
        #[arg(long, value_name = "PFM")]
        pred: PathBuf,
        /// Ground-truth depth map (PFM); zeros mark invalid pixels.
        #[arg(long, value_name = "PFM")]
        gt: PathBuf,
        /// Fit scale and shift before measuring.
        #[arg(long)]
        align: bool,
        /// Report destination: a path, or "-" for stdout.
        #[arg(long, value_name = "PATH|-")]
        json: String,
    },
    /// Evaluate the training loss of a prediction against ground truth.
    Loss {
        /// Predicted depth map (PFM).
        #[arg(long, value_name = "PFM")]
        pred: PathBuf,
        /// Ground-truth depth map (PFM); zeros mark invalid pixels.
        #[arg(long, value_name = "PFM")]
        gt: PathBuf,
        /// Also compare the analytic gradient against finite differences.
        #[arg(long = "grad-check")]
        grad_check: bool,
        /// Report destination: a path, or "-" for stdout.
        #[arg(long, value_name = "PATH|-")]
        json: String,
    },
    /// Run the seeded attention pipeline and report output checksums.
    AttnDemo {
        /// Seed for the parameter and feature generator.
        #[arg(long)]
        seed: u64,
        /// Output grid height; width is always twice this.
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Attention window side, clamped per scale.
        #[arg(long, default_value_t = 8)]
        window: usize,
        /// Report destination: a path, or "-" for stdout.
        #[arg(long, value_name = "PATH|-")]
        json: String,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests arrive as "errors" but exit 0;
            // genuine usage problems exit 2.
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Prefixes format errors with the file they came from.
fn in_file(err: Error, path: &Path) -> Error {
    match err {
        Error::Format { msg, offset } => Error::Format {
            msg: format!("{}: {msg}", path.display()),
            offset,
        },
        other => other,
    }
}

fn load_tensor(path: &Path) -> Result<ErpTensor> {
    let bytes = read_bytes(path)?;
    let (img, _) = parse_pfm_with_offset(&bytes).map_err(|e| in_file(e, path))?;
    img.to_tensor()
}

/// Loads a depth map along with the digest of its on-disk payload bytes.
fn load_depth(path: &Path) -> Result<(DepthMap, String)> {
    let bytes = read_bytes(path)?;
    let (img, payload) = parse_pfm_with_offset(&bytes).map_err(|e| in_file(e, path))?;
    let depth = img.to_depth_map().map_err(|e| in_file(e, path))?;
    Ok((depth, fnv1a64_hex(&bytes[payload..])))
}

fn save_tensor(t: &ErpTensor, path: &Path) -> Result<()> {
    write_bytes(path, &encode_pfm(&PfmImage::from_tensor(t)?)?)
}

fn save_depth(d: &DepthMap, path: &Path) -> Result<()> {
    write_bytes(path, &encode_pfm(&PfmImage::from_depth_map(d))?)
}

/// Serializes a report canonically, with a trailing newline, to stdout
/// ("-") or a file.
fn emit_json(dest: &str, report: &JsonValue) -> Result<()> {
    let mut text = to_canonical_json(report)?;
    text.push('\n');
    if dest == "-" {
        print!("{text}");
        Ok(())
    } else {
        write_bytes(Path::new(dest), text.as_bytes())
    }
}

fn base_report(command: &str, params: JsonValue) -> BTreeMap<String, JsonValue> {
    let mut map = BTreeMap::new();
    map.insert("command".to_string(), JsonValue::Str(command.to_string()));
    map.insert("params".to_string(), params);
    map.insert(
        "version".to_string(),
        JsonValue::Str(env!("CARGO_PKG_VERSION").to_string()),
    );
    map
}

fn input_digests(pairs: &[(&str, &str)]) -> JsonValue {
    JsonValue::Object(
        pairs
            .iter()
            .map(|(name, digest)| (name.to_string(), JsonValue::Str(digest.to_string())))
            .collect(),
    )
}

fn mat_to_json(m: &Mat) -> JsonValue {
    JsonValue::Array(
        (0..m.rows())
            .map(|r| JsonValue::Array(m.row(r).iter().map(|&x| JsonValue::Float(x)).collect()))
            .collect(),
    )
}

fn uint(x: usize) -> JsonValue {
    JsonValue::UInt(x as u64)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Brp {
            input,
            out,
            inverse,
        } => {
            let t = load_tensor(&input)?;
            let mapped = if inverse { brp_inverse(&t) } else { brp(&t) }?;
            save_tensor(&mapped, &out)
        }
        Command::Rotate {
            input,
            out,
            cols,
            inverse,
        } => {
            let t = load_tensor(&input)?;
            let rotated = if inverse {
                circular_rotate_inverse(&t, cols)
            } else {
                circular_rotate(&t, cols)
            };
            save_tensor(&rotated, &out)
        }
        Command::Cle {
            height,
            width,
            window,
            row,
            json,
        } => {
            let spec = WindowSpec::new(window, GridShape::new(height, width)?)?;
            let table = cle_window_distances(&spec, row)?;
            let mut report = base_report(
                "cle",
                JsonValue::object([
                    ("height", uint(height)),
                    ("row", uint(row)),
                    ("width", uint(width)),
                    ("window", uint(window)),
                ]),
            );
            report.insert("distances".to_string(), mat_to_json(table.dist()));
            report.insert("tokens".to_string(), uint(window * window));
            emit_json(&json, &JsonValue::Object(report))
        }
        Command::Gspe {
            height,
            width,
            json,
        } => {
            let g = gspe_matrix(GridShape::new(height, width)?);
            let mut report = base_report(
                "gspe",
                JsonValue::object([("height", uint(height)), ("width", uint(width))]),
            );
            report.insert("distances".to_string(), mat_to_json(g.dist()));
            report.insert("tokens".to_string(), uint(g.tokens()));
            emit_json(&json, &JsonValue::Object(report))
        }
        Command::Align {
            pred,
            gt,
            out,
            json,
        } => {
            let (pred_map, pred_digest) = load_depth(&pred)?;
            let (gt_map, gt_digest) = load_depth(&gt)?;
            let align = ssi_align(&pred_map, &gt_map)?;
            if let Some(out) = out {
                save_depth(&apply_align(&pred_map, align)?, &out)?;
            }
            let valid = gt_map.values().iter().filter(|&&g| g > 0.0).count();
            let mut report = base_report("align", JsonValue::object([]));
            report.insert(
                "inputs".to_string(),
                input_digests(&[("gt", &gt_digest), ("pred", &pred_digest)]),
            );
            report.insert("s".to_string(), JsonValue::Float(align.s));
            report.insert("t".to_string(), JsonValue::Float(align.t));
            report.insert("valid_count".to_string(), uint(valid));
            emit_json(&json, &JsonValue::Object(report))
        }
        Command::Eval {
            pred,
            gt,
            align,
            json,
        } => {
            let (pred_map, pred_digest) = load_depth(&pred)?;
            let (gt_map, gt_digest) = load_depth(&gt)?;
            let m = evaluate(&pred_map, &gt_map, align)?;
            let mut report = base_report(
                "eval",
                JsonValue::object([("align", JsonValue::Bool(align))]),
            );
            report.insert(
                "inputs".to_string(),
                input_digests(&[("gt", &gt_digest), ("pred", &pred_digest)]),
            );
            for (key, value) in [
                ("abs_rel", m.abs_rel),
                ("sq_rel", m.sq_rel),
                ("rms_lin", m.rms_lin),
                ("rms_log", m.rms_log),
                ("mae", m.mae),
                ("delta1", m.delta1),
                ("delta2", m.delta2),
                ("delta3", m.delta3),
            ] {
                report.insert(key.to_string(), JsonValue::Float(value));
            }
            report.insert("log_excluded".to_string(), uint(m.log_excluded));
            report.insert("valid_count".to_string(), uint(m.valid_count));
            emit_json(&json, &JsonValue::Object(report))
        }
        Command::Loss {
            pred,
            gt,
            grad_check,
            json,
        } => {
            let (pred_map, pred_digest) = load_depth(&pred)?;
            let (gt_map, gt_digest) = load_depth(&gt)?;
            let (loss, align) = total_loss(&pred_map, &gt_map)?;
            let mut report = base_report(
                "loss",
                JsonValue::object([("grad_check", JsonValue::Bool(grad_check))]),
            );
            report.insert(
                "inputs".to_string(),
                input_digests(&[("gt", &gt_digest), ("pred", &pred_digest)]),
            );
            report.insert("l_grad".to_string(), JsonValue::Float(loss.l_grad));
            report.insert("l_pix".to_string(), JsonValue::Float(loss.l_pix));
            report.insert("l_total".to_string(), JsonValue::Float(loss.l_total));
            report.insert("s".to_string(), JsonValue::Float(align.s));
            report.insert("t".to_string(), JsonValue::Float(align.t));
            report.insert("valid_count".to_string(), uint(loss.valid_count));
            if grad_check {
                let check = gradient_check(&pred_map, &gt_map, GRAD_CHECK_STEP)?;
                report.insert(
                    "grad_check".to_string(),
                    JsonValue::object([
                        ("checked", uint(check.checked)),
                        ("max_rel_err", JsonValue::Float(check.max_rel_err)),
                        ("skipped", uint(check.skipped)),
                        ("step", JsonValue::Float(GRAD_CHECK_STEP)),
                    ]),
                );
            }
            emit_json(&json, &JsonValue::Object(report))
        }
        Command::AttnDemo {
            seed,
            height,
            window,
            json,
        } => {
            let cfg = DemoConfig::new(seed, height, window)?;
            let JsonValue::Object(mut report) = run_demo(&cfg)? else {
                unreachable!("demo reports are objects");
            };
            report.insert(
                "command".to_string(),
                JsonValue::Str("attn-demo".to_string()),
            );
            report.insert(
                "version".to_string(),
                JsonValue::Str(env!("CARGO_PKG_VERSION").to_string()),
            );
            emit_json(&json, &JsonValue::Object(report))
        }
    }
}
