//! Minimal plugin speaking the harness wire protocol, used by the test suites
//! and as a template for real adapters.
//!
//! Usage: `evbench-plugin-fixture <mode> [arg]`
//!
//! * `echo` - reconstructor returning an all-0.5 image
//! * `first` - reconstructor returning an image filled with the tensor's first value
//! * `crash N` - like `echo` but exits after N inferences
//! * `crash-height H` - like `echo` but exits on the first inference when the session height is H
//! * `bad-dims` - reconstructor replying with one extra row
//! * `overshoot` - reconstructor replying with 1.5 everywhere
//! * `version2` - answers the handshake with protocol_version=2
//! * `silent` - never answers
//! * `mse` - full-reference metric (mean squared difference)
//! * `mean` - no-reference metric (mean intensity)

use std::io::{self, BufReader, BufWriter};
use std::process::ExitCode;

use evbench::plugin::wire::{self, Tensor, WireMessage};

fn kv(pairs: &[(&str, &str)]) -> Vec<u8> {
    wire::format_key_values(pairs.iter().map(|(k, v)| (*k, v.to_string())))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("echo").to_string();
    let arg: Option<usize> = args.get(1).and_then(|v| v.parse().ok());
    let crash_after = if mode == "crash" { arg.or(Some(0)) } else { None };
    let crash_height = if mode == "crash-height" { arg } else { None };

    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    let mut dims = (0usize, 0usize);
    let mut inferences = 0usize;

    loop {
        let msg = match wire::read_message(&mut input) {
            Ok(Some(m)) => m,
            Ok(None) => return ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("plugin-fixture: {e}");
                return ExitCode::FAILURE;
            }
        };
        if mode == "silent" {
            continue;
        }
        let reply = match &msg.tag {
            t if *t == wire::INIT => {
                let fields = wire::parse_key_values(&msg.payload).unwrap_or_default();
                let get = |k: &str| fields.iter().find(|(key, _)| key == k).and_then(|(_, v)| v.parse::<usize>().ok()).unwrap_or(0);
                dims = (get("height"), get("width"));
                let version = if mode == "version2" { "2" } else { "1" };
                let (kind, metric_kind) = match mode.as_str() {
                    "mse" => ("metric", Some("full_reference")),
                    "mean" => ("metric", Some("no_reference")),
                    _ => ("reconstructor", None),
                };
                let mut pairs = vec![("protocol_version", version), ("name", "fixture"), ("kind", kind), ("version", "0.1")];
                if let Some(mk) = metric_kind {
                    pairs.push(("metric_kind", mk));
                }
                Some(WireMessage::new(wire::IRES, kv(&pairs)))
            }
            t if *t == wire::RSET => None,
            t if *t == wire::QUIT => return ExitCode::SUCCESS,
            t if *t == wire::TENS => {
                if crash_after.is_some_and(|n| inferences >= n) || crash_height == Some(dims.0) {
                    std::process::exit(3);
                }
                inferences += 1;
                Some(match wire::decode_tensor(&msg.payload) {
                    Ok(tensor) => {
                        let (h, w) = match tensor.dims.as_slice() {
                            [_, h, w] => (*h, *w),
                            _ => dims,
                        };
                        let (h, value) = match mode.as_str() {
                            "bad-dims" => (h + 1, 0.5),
                            "overshoot" => (h, 1.5),
                            "first" => (h, tensor.data.first().copied().unwrap_or(0.0)),
                            _ => (h, 0.5),
                        };
                        let img = Tensor { dims: vec![h, w], data: vec![value; h * w] };
                        WireMessage::new(wire::IMGR, wire::encode_tensor(&img).expect("valid tensor"))
                    }
                    Err(e) => WireMessage::new(wire::ERRS, e.to_string()),
                })
            }
            t if *t == wire::METQ => Some(metric_reply(&mode, &msg.payload)),
            _ => Some(WireMessage::new(wire::ERRS, format!("unexpected {}", msg.tag_str()))),
        };
        if let Some(reply) = reply {
            if wire::write_message(&mut output, &reply).is_err() {
                return ExitCode::FAILURE;
            }
        }
    }
}

fn metric_reply(mode: &str, payload: &[u8]) -> WireMessage {
    let mut tensors = Vec::new();
    let mut rest = payload;
    while !rest.is_empty() {
        match wire::decode_tensor_prefix(rest) {
            Ok((t, used)) => {
                tensors.push(t);
                rest = &rest[used..];
            }
            Err(e) => return WireMessage::new(wire::ERRS, e.to_string()),
        }
    }
    let value = match (mode, tensors.as_slice()) {
        ("mse", [a, b]) if a.dims == b.dims => {
            let n = a.data.len().max(1) as f64;
            a.data.iter().zip(&b.data).map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2)).sum::<f64>() / n
        }
        ("mean", [a]) => a.data.iter().map(|&v| f64::from(v)).sum::<f64>() / a.data.len().max(1) as f64,
        (m, ts) => return WireMessage::new(wire::ERRS, format!("{m}: wrong arity {}", ts.len())),
    };
    WireMessage::new(wire::METR, value.to_le_bytes().to_vec())
}
