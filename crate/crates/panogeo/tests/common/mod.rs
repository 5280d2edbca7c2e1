//! Helpers shared by the integration test targets: binary invocation,
//! fixture generation, and the golden-command table.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use panogeo::pfm::{write_pfm_depth, write_pfm_tensor};
use panogeo::report::JsonValue;
use panogeo::rng::SplitMix64;
use panogeo::sphere::GridShape;
use panogeo::tensor::{DepthMap, ErpTensor};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_panogeo")
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> PathBuf {
    manifest_dir().join("tests/fixtures").join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    manifest_dir().join("tests/golden").join(name)
}

pub fn run(args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Vec<u8> {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

pub fn exit_code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

/// Quantizes through 32-bit storage so fixture values survive the PFM
/// round trip bit for bit.
pub fn quant(x: f64) -> f64 {
    f64::from(x as f32)
}

/// Writes the deterministic fixture set. Uses only integer arithmetic
/// and the seeded generator, so the bytes are reproducible anywhere.
pub fn write_fixtures(dir: &Path) {
    let shape = GridShape::new(8, 16).unwrap();

    let mut rng = SplitMix64::new(101);
    let pred = DepthMap::from_fn(shape, |_, _| quant(0.3 + 2.0 * rng.next_f64())).unwrap();
    write_pfm_depth(&pred, dir.join("pred_8x16.pfm")).unwrap();

    let mut rng = SplitMix64::new(102);
    let gt = DepthMap::from_fn(shape, |r, c| {
        if (r * 16 + c) % 11 == 5 {
            0.0
        } else {
            quant(0.5 + 1.5 * rng.next_f64())
        }
    })
    .unwrap();
    write_pfm_depth(&gt, dir.join("gt_8x16.pfm")).unwrap();

    let mut rng = SplitMix64::new(103);
    let pano = DepthMap::from_fn(shape, |_, _| quant(1.0 + rng.next_f64())).unwrap();
    write_pfm_depth(&pano, dir.join("pano_8x16.pfm")).unwrap();

    let mut rng = SplitMix64::new(104);
    let rgb = ErpTensor::from_fn(3, GridShape::new(4, 8).unwrap(), |_, _, _| {
        quant(rng.next_centered())
    })
    .unwrap();
    write_pfm_tensor(&rgb, dir.join("rgb_4x8.pfm")).unwrap();
}

/// How a command delivers the output under test.
pub enum Sink {
    /// Append `--json <dest>`.
    Json,
    /// Append `--out <dest>`.
    Pfm,
}

/// Every golden-tracked invocation: arguments (sink flag excluded),
/// sink kind, golden file name.
pub fn golden_commands() -> Vec<(Vec<String>, Sink, &'static str)> {
    let pred = fixture("pred_8x16.pfm").display().to_string();
    let gt = fixture("gt_8x16.pfm").display().to_string();
    let pano = fixture("pano_8x16.pfm").display().to_string();
    let rgb = fixture("rgb_4x8.pfm").display().to_string();
    let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    vec![
        (
            s(&["cle", "--height", "16", "--width", "32", "--window", "4", "--row", "1"]),
            Sink::Json,
            "cle.json",
        ),
        (
            s(&["gspe", "--height", "4", "--width", "8"]),
            Sink::Json,
            "gspe.json",
        ),
        (
            s(&["align", "--pred", &pred, "--gt", &gt]),
            Sink::Json,
            "align.json",
        ),
        (
            s(&["align", "--pred", &pred, "--gt", &gt, "--json", "-"]),
            Sink::Pfm,
            "aligned.pfm",
        ),
        (
            s(&["eval", "--pred", &pred, "--gt", &gt]),
            Sink::Json,
            "eval.json",
        ),
        (
            s(&["eval", "--pred", &pred, "--gt", &gt, "--align"]),
            Sink::Json,
            "eval_align.json",
        ),
        (
            s(&["loss", "--pred", &pred, "--gt", &gt]),
            Sink::Json,
            "loss.json",
        ),
        (
            s(&["loss", "--pred", &pred, "--gt", &gt, "--grad-check"]),
            Sink::Json,
            "loss_gradcheck.json",
        ),
        (
            s(&["attn-demo", "--seed", "7"]),
            Sink::Json,
            "attn_demo.json",
        ),
        (s(&["brp", "--in", &pano]), Sink::Pfm, "brp.pfm"),
        (
            s(&["brp", "--in", &pano, "--inverse"]),
            Sink::Pfm,
            "brp_inverse.pfm",
        ),
        (
            s(&["rotate", "--in", &pano, "--cols", "3"]),
            Sink::Pfm,
            "rotate3.pfm",
        ),
        (
            s(&["rotate", "--in", &rgb, "--cols", "-2"]),
            Sink::Pfm,
            "rotate_rgb.pfm",
        ),
    ]
}

/// Runs one golden command with its output steered to `dest`, returning
/// the produced bytes.
pub fn run_golden_command(args: &[String], sink: &Sink, dest: &Path) -> Vec<u8> {
    let dest_str = dest.display().to_string();
    let mut argv: Vec<&str> = args.iter().map(String::as_str).collect();
    match sink {
        Sink::Json => argv.extend(["--json", &dest_str]),
        Sink::Pfm => argv.extend(["--out", &dest_str]),
    }
    run_ok(&argv);
    std::fs::read(dest).expect("command wrote its output")
}

/// Rebuilds a report tree from an independently parsed form; used to
/// prove the output is already in canonical form.
pub fn rebuild(v: &serde_json::Value) -> JsonValue {
    match v {
        serde_json::Value::Bool(b) => JsonValue::Bool(*b),
        serde_json::Value::Number(n) => {
            if n.to_string().contains(['e', 'E', '.']) {
                JsonValue::Float(n.as_f64().unwrap())
            } else if let Some(u) = n.as_u64() {
                JsonValue::UInt(u)
            } else {
                JsonValue::Int(n.as_i64().unwrap())
            }
        }
        serde_json::Value::String(s) => JsonValue::Str(s.clone()),
        serde_json::Value::Array(items) => JsonValue::Array(items.iter().map(rebuild).collect()),
        serde_json::Value::Object(map) => {
            JsonValue::Object(map.iter().map(|(k, v)| (k.clone(), rebuild(v))).collect())
        }
        serde_json::Value::Null => panic!("reports never contain null"),
    }
}
