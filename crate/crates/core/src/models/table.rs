use std::fmt::Write;

use eegart_nn::layers::LayerSpec;
use serde::{Deserialize, Serialize};

use super::{Body, Branch, Model, ModelKind, Profile, DROPOUT};
use crate::signal::EPOCH_LEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub name: String,
    pub spec: LayerSpec,
    /// Per-sample output shape.
    pub output_shape: Vec<usize>,
    pub params: usize,
}

fn row(name: impl Into<String>, spec: LayerSpec, output_shape: Vec<usize>) -> LayerRow {
    let params = spec.param_count();
    LayerRow {
        name: name.into(),
        spec,
        output_shape,
        params,
    }
}

fn branch_rows(b: &Branch, out: &mut Vec<LayerRow>) {
    let n = b.layout.name;
    for (i, blk) in b.blocks.iter().enumerate() {
        let k = i + 1;
        let ch = blk.conv.out_channels;
        let shape = vec![ch, blk.out_len];
        out.push(row(format!("{n}.conv{k}"), blk.conv.spec(), shape.clone()));
        if let Some(c) = &blk.cbam {
            out.push(row(format!("{n}.cbam{k}"), c.spec(), shape.clone()));
        }
        out.push(row(format!("{n}.bn{k}"), blk.bn.spec(), shape.clone()));
        out.push(row(format!("{n}.relu{k}"), LayerSpec::Relu, shape.clone()));
        if i == 0 {
            let pooled = vec![ch, blk.out_len / b.layout.first_pool];
            out.push(row(format!("{n}.pool1"), LayerSpec::MaxPool { size: b.layout.first_pool }, pooled.clone()));
            out.push(row(format!("{n}.drop1"), LayerSpec::Dropout { rate: DROPOUT }, pooled));
        }
    }
    let shape = vec![b.channels, b.out_len];
    out.push(row(format!("{n}.pool2"), LayerSpec::MaxPool { size: b.layout.last_pool }, shape.clone()));
    out.push(row(format!("{n}.drop2"), LayerSpec::Dropout { rate: DROPOUT }, shape));
}

pub(super) fn rows(model: &Model) -> Vec<LayerRow> {
    let mut out = Vec::new();
    match &model.body {
        Body::Heuristic(h) => {
            let f = h.conv.out_channels;
            out.push(row("conv", h.conv.spec(), vec![f, EPOCH_LEN]));
            out.push(row("bn", h.bn.spec(), vec![f, EPOCH_LEN]));
            out.push(row("relu", LayerSpec::Relu, vec![f, EPOCH_LEN]));
            out.push(row("gap", LayerSpec::GlobalAvgPool, vec![f]));
            out.push(row("fc1", h.fc1.spec(), vec![h.fc1.units]));
            out.push(row("relu_fc", LayerSpec::Relu, vec![h.fc1.units]));
            out.push(row("fc2", h.fc2.spec(), vec![2]));
        }
        Body::TwoBranch(t) => {
            branch_rows(&t.temporal, &mut out);
            branch_rows(&t.frequency, &mut out);
            if let Some((lstm, shortcut)) = &t.lstm {
                let steps = t.temporal.out_len + t.frequency.out_len;
                out.push(row("lstm", lstm.spec(), vec![steps, 2 * lstm.units]));
                out.push(row("shortcut", shortcut.spec(), vec![shortcut.units]));
            }
            out.push(row("head", t.head.spec(), vec![2]));
        }
    }
    out.push(row("softmax", LayerSpec::Softmax, vec![2]));
    out
}

fn hyper(spec: &LayerSpec) -> String {
    match spec {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad_left,
            pad_right,
            pad_mode,
        } => format!(
            "{in_channels}->{out_channels}, k={kernel}, s={stride}, pad={pad_left}/{pad_right} {}",
            serde_json::to_value(pad_mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
        ),
        LayerSpec::BatchNorm { channels } => format!("{channels} ch"),
        LayerSpec::MaxPool { size } => format!("size {size}"),
        LayerSpec::Dropout { rate } => format!("rate {rate}"),
        LayerSpec::Dense { inputs, units } => format!("{inputs}->{units}"),
        LayerSpec::BiLstm { inputs, units } => format!("{inputs}->2x{units}"),
        LayerSpec::Cbam {
            channels,
            reduction,
            spatial_kernel,
        } => format!("{channels} ch, r={reduction}, k={spatial_kernel}"),
        _ => String::new(),
    }
}

fn kind_name(spec: &LayerSpec) -> String {
    serde_json::to_value(spec)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(String::from))
        .unwrap_or_default()
}

/// Markdown tables for every model kind at both profiles.
pub fn layer_table_markdown() -> String {
    let mut s = String::new();
    s.push_str("# Layer tables\n\n");
    s.push_str("Generated from the model builders; `cargo test -p eegart-core --test models` fails when this file is stale ");
    s.push_str("(set `EEGART_UPDATE_DOCS=1` to rewrite it). Output shapes are per sample, `[channels, length]`. ");
    s.push_str("Input is one min-max scaled 20-s epoch, `[1, 2560]`.\n");
    for profile in [Profile::Toy, Profile::Full] {
        for kind in ModelKind::ALL {
            let m = Model::build(kind, profile, 0).expect("built-in architectures are valid");
            let rows = m.layer_table();
            let _ = writeln!(s, "\n## {kind} ({})\n", profile.as_str());
            s.push_str("| # | layer | kind | hyperparameters | output | params |\n");
            s.push_str("|---|---|---|---|---|---|\n");
            for (i, r) in rows.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {:?} | {} |",
                    i + 1,
                    r.name,
                    kind_name(&r.spec),
                    hyper(&r.spec),
                    r.output_shape,
                    r.params
                );
            }
            let total: usize = rows.iter().map(|r| r.params).sum();
            let _ = writeln!(s, "\nTrainable parameters: {total}");
        }
    }
    s
}
