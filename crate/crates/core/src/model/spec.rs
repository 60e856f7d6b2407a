use std::fmt::Write as _;

/// One row of the architecture summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDesc {
    pub name: String,
    pub kind: String,
    /// Per-sample shapes (batch axis omitted).
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub params: usize,
}

/// Static description of a built network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub name: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub layers: Vec<LayerDesc>,
    pub total_params: usize,
}

/// Exact number of trainable scalars (running statistics excluded).
pub fn count_parameters(spec: &NetworkSpec) -> usize {
    spec.total_params
}

fn dims(d: &[usize]) -> String {
    d.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x")
}

impl NetworkSpec {
    /// Aligned plain-text layer table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "network: {}", self.name);
        let _ = writeln!(out, "{:<36} {:<22} {:>14} {:>14} {:>11}", "layer", "kind", "input", "output", "params");
        for l in &self.layers {
            let _ = writeln!(
                out,
                "{:<36} {:<22} {:>14} {:>14} {:>11}",
                l.name,
                l.kind,
                dims(&l.input),
                dims(&l.output),
                l.params
            );
        }
        let _ = writeln!(out, "total trainable parameters: {}", self.total_params);
        out
    }

    /// Machine-readable rows: `name,kind,input,output,params`.
    pub fn csv_rows(&self) -> String {
        let mut out = String::from("name,kind,input,output,params\n");
        for l in &self.layers {
            let _ = writeln!(out, "{},{},{},{},{}", l.name, l.kind, dims(&l.input), dims(&l.output), l.params);
        }
        out
    }
}
