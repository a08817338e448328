//! Trained-model files.
//!
//! A model artifact bundles the model kind, its effect-score mode, the
//! feature standardizer fitted on the training split, and every parameter of
//! every component. The format is line-oriented decimal text with floats at
//! 17 significant digits, so a reload reproduces the exact `f64` bits:
//!
//! ```text
//! descn-model 1
//! kind = descn
//! ite_mode = head_diff
//! standardizer.input_dim = 20
//! standardizer.kept = 0,1,...
//! standardizer.mean = <f>,<f>,...
//! standardizer.std = <f>,<f>,...
//! component = trunk
//! seed = 123
//! layer = elu 20 64
//! w = <f>,...            (row-major)
//! b = <f>,...
//! ...
//! end
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{format_f64, Standardizer};
use crate::error::{Error, Result};
use crate::model::{IteMode, ModelKind, ModelParams};
use crate::nn::{Activation, LayerSpec, ParamStore};

const MAGIC: &str = "descn-model 1";

/// A trained model plus everything needed to score raw tables.
#[derive(Clone, Debug)]
pub struct ModelArtifact {
    pub kind: ModelKind,
    pub ite_mode: IteMode,
    pub standardizer: Standardizer,
    pub params: ModelParams,
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| format_f64(v))
        .collect::<Vec<_>>()
        .join(",")
}

fn join_usize(values: &[usize]) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ModelArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        writeln!(out, "{MAGIC}").map_err(io_err)?;
        writeln!(out, "kind = {}", self.kind.name()).map_err(io_err)?;
        writeln!(out, "ite_mode = {}", self.ite_mode.name()).map_err(io_err)?;
        writeln!(
            out,
            "standardizer.input_dim = {}",
            self.standardizer.input_dim()
        )
        .map_err(io_err)?;
        writeln!(
            out,
            "standardizer.kept = {}",
            join_usize(self.standardizer.kept())
        )
        .map_err(io_err)?;
        let (mean, std) = self.standardizer.stats();
        writeln!(out, "standardizer.mean = {}", join_floats(mean)).map_err(io_err)?;
        writeln!(out, "standardizer.std = {}", join_floats(std)).map_err(io_err)?;
        for (name, store) in self.params.components() {
            writeln!(out, "component = {name}").map_err(io_err)?;
            writeln!(out, "seed = {}", store.rng_seed()).map_err(io_err)?;
            for (l, spec) in store.specs().iter().enumerate() {
                writeln!(
                    out,
                    "layer = {} {} {}",
                    spec.activation.name(),
                    spec.input_dim,
                    spec.output_dim
                )
                .map_err(io_err)?;
                let (w, b) = store.layer_weights(l);
                writeln!(out, "w = {}", join_floats(w)).map_err(io_err)?;
                writeln!(out, "b = {}", join_floats(b)).map_err(io_err)?;
            }
        }
        writeln!(out, "end").map_err(io_err)?;
        out.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Parser {
            path,
            lines: text.lines().enumerate(),
        }
        .parse()
    }
}

struct Parser<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

struct PendingComponent {
    name: String,
    seed: u64,
    specs: Vec<LayerSpec>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl PendingComponent {
    fn build(self) -> Result<(String, ParamStore)> {
        let store = ParamStore::from_parts(self.specs, self.weights, self.biases, self.seed)?;
        Ok((self.name, store))
    }
}

impl<'a> Parser<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::parse(self.path, 0, "unexpected end of model file"))
    }

    fn expect_key(&mut self, key: &str) -> Result<(usize, String)> {
        let (no, line) = self.next_line()?;
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(self.path, no, format!("expected `{key} = ...`")))?;
        if k.trim() != key {
            return Err(Error::parse(
                self.path,
                no,
                format!("expected key `{key}`, got `{}`", k.trim()),
            ));
        }
        Ok((no, v.trim().to_string()))
    }

    fn parse(mut self) -> Result<ModelArtifact> {
        let (no, magic) = self.next_line()?;
        if magic.trim() != MAGIC {
            return Err(Error::parse(self.path, no, "not a model file"));
        }
        let kind = ModelKind::parse(&self.expect_key("kind")?.1)?;
        let ite_mode = IteMode::parse(&self.expect_key("ite_mode")?.1)?;
        let (no_dim, dim) = self.expect_key("standardizer.input_dim")?;
        let input_dim: usize = dim
            .parse()
            .map_err(|_| Error::parse(self.path, no_dim, "bad input_dim"))?;
        let kept_kv = self.expect_key("standardizer.kept")?;
        let kept = self.parse_usize_list(kept_kv)?;
        let mean_kv = self.expect_key("standardizer.mean")?;
        let mean = self.parse_float_list(mean_kv)?;
        let std_kv = self.expect_key("standardizer.std")?;
        let std = self.parse_float_list(std_kv)?;
        let standardizer = Standardizer::from_parts(input_dim, kept, mean, std)?;

        let mut components: HashMap<String, ParamStore> = HashMap::new();
        let mut pending: Option<PendingComponent> = None;
        loop {
            let (no, raw) = self.next_line()?;
            let line = raw.trim();
            if line == "end" {
                if let Some(p) = pending.take() {
                    let (name, store) = p.build()?;
                    components.insert(name, store);
                }
                break;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(self.path, no, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "component" => {
                    if let Some(p) = pending.take() {
                        let (name, store) = p.build()?;
                        components.insert(name, store);
                    }
                    pending = Some(PendingComponent {
                        name: value.to_string(),
                        seed: 0,
                        specs: Vec::new(),
                        weights: Vec::new(),
                        biases: Vec::new(),
                    });
                }
                "seed" => {
                    let p = pending
                        .as_mut()
                        .ok_or_else(|| Error::parse(self.path, no, "seed outside a component"))?;
                    p.seed = value
                        .parse()
                        .map_err(|_| Error::parse(self.path, no, "bad seed"))?;
                }
                "layer" => {
                    let p = pending
                        .as_mut()
                        .ok_or_else(|| Error::parse(self.path, no, "layer outside a component"))?;
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(Error::parse(
                            self.path,
                            no,
                            "layer needs `activation in out`",
                        ));
                    }
                    let activation = Activation::parse(parts[0])?;
                    let input_dim = parts[1]
                        .parse()
                        .map_err(|_| Error::parse(self.path, no, "bad layer input dim"))?;
                    let output_dim = parts[2]
                        .parse()
                        .map_err(|_| Error::parse(self.path, no, "bad layer output dim"))?;
                    p.specs
                        .push(LayerSpec::new(input_dim, output_dim, activation));
                }
                "w" => {
                    let floats = self.parse_float_list((no, value.to_string()))?;
                    let p = pending
                        .as_mut()
                        .ok_or_else(|| Error::parse(self.path, no, "w outside a component"))?;
                    p.weights.push(floats);
                }
                "b" => {
                    let floats = self.parse_float_list((no, value.to_string()))?;
                    let p = pending
                        .as_mut()
                        .ok_or_else(|| Error::parse(self.path, no, "b outside a component"))?;
                    p.biases.push(floats);
                }
                other => {
                    return Err(Error::parse(
                        self.path,
                        no,
                        format!("unknown key `{other}`"),
                    ));
                }
            }
        }
        let params = ModelParams::from_components(kind, components)?;
        Ok(ModelArtifact {
            kind,
            ite_mode,
            standardizer,
            params,
        })
    }

    fn parse_float_list(&self, kv: (usize, String)) -> Result<Vec<f64>> {
        let (no, value) = kv;
        if value.is_empty() {
            return Ok(Vec::new());
        }
        value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(self.path, no, format!("bad float `{s}`")))
            })
            .collect()
    }

    fn parse_usize_list(&self, kv: (usize, String)) -> Result<Vec<usize>> {
        let (no, value) = kv;
        if value.is_empty() {
            return Ok(Vec::new());
        }
        value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(self.path, no, format!("bad index `{s}`")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_standardizer, Dataset};
    use crate::mat::Mat;
    use crate::model::{init_model, TrainConfig};

    fn sample_artifact() -> ModelArtifact {
        let cfg = TrainConfig {
            shared_hidden: 4,
            head_hidden: 3,
            depth: 2,
            seed: 42,
            ..TrainConfig::for_kind(ModelKind::Descn)
        };
        let params = init_model(ModelKind::Descn, 3, &cfg).unwrap();
        let train = Dataset {
            x: Mat::from_rows(&[
                vec![0.1, 2.0, -1.0],
                vec![1.4, -0.5, 0.3],
                vec![-0.2, 0.8, 1.9],
            ])
            .unwrap(),
            w: vec![1, 0, 1],
            y: vec![0, 1, 1],
            truth: None,
        };
        ModelArtifact {
            kind: ModelKind::Descn,
            ite_mode: IteMode::HeadDiff,
            standardizer: fit_standardizer(&train).unwrap(),
            params,
        }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let art = sample_artifact();
        art.save(&path).unwrap();
        let back = ModelArtifact::load(&path).unwrap();
        assert_eq!(back.kind, art.kind);
        assert_eq!(back.ite_mode, art.ite_mode);
        assert_eq!(back.standardizer, art.standardizer);
        assert_eq!(back.params, art.params);

        // Re-saving reproduces the file byte for byte.
        let path2 = dir.path().join("model2.txt");
        back.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn load_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "not a model\n").unwrap();
        assert!(ModelArtifact::load(&path).is_err());
    }
}
