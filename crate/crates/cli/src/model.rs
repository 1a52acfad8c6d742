//! Model file parsing and the built-in example models.
//!
//! A model file is a single JSON document. Block maps use signed indices as
//! string keys (`"-2"`, `"0"`, `"3"`); numeric entries are decimal literals.

use std::collections::BTreeMap;
use std::path::Path;

use markov_poisson::ctmc::Generator;
use markov_poisson::gig1::{build_map_g1_rca, BlockSequences};
use markov_poisson::linalg::DenseMatrix;
use markov_poisson::poisson::ForcingFunction;
use markov_poisson::presets;
use markov_poisson::{Error, SolverConfig};
use serde::{Deserialize, Serialize};

/// Model kinds accepted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "dtmc-dense")]
    DtmcDense,
    #[serde(rename = "ctmc-dense")]
    CtmcDense,
    #[serde(rename = "mg1")]
    Mg1,
    #[serde(rename = "gim1")]
    Gim1,
    #[serde(rename = "qbd")]
    Qbd,
    #[serde(rename = "gig1")]
    Gig1,
    #[serde(rename = "map-g1-rca")]
    MapG1Rca,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ForcingSpec {
    Name(String),
    Table { table: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnchorSpec {
    Index(usize),
    LevelPhase([usize; 2]),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BlocksSpec {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub a: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub b: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat_deepest_b: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConfigSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_mass_bound: Option<f64>,
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<BlocksSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censor_set: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigSpec>,
}

/// A fully validated model ready for the solvers.
pub struct LoadedModel {
    pub kind: ModelKind,
    pub block_size: usize,
    pub blocks: Option<BlockSequences>,
    pub dense: Option<DenseMatrix>,
    pub generator: Option<Generator>,
    pub forcing: Option<ForcingFunction>,
    pub anchor: Option<usize>,
    pub censor_set: Vec<usize>,
    pub config: SolverConfig,
}

fn parse_block_map(
    raw: &BTreeMap<String, Vec<Vec<f64>>>,
) -> Result<BTreeMap<i64, DenseMatrix>, Error> {
    let mut out = BTreeMap::new();
    for (key, rows) in raw {
        let idx: i64 = key
            .parse()
            .map_err(|_| Error::InvalidInput(format!("block index {key:?} is not an integer")))?;
        out.insert(idx, DenseMatrix::from_rows(rows)?);
    }
    Ok(out)
}

fn block_map_to_spec(map: &BTreeMap<i64, DenseMatrix>) -> BTreeMap<String, Vec<Vec<f64>>> {
    map.iter()
        .map(|(&i, blk)| {
            let rows = (0..blk.rows()).map(|r| blk.row(r).to_vec()).collect();
            (i.to_string(), rows)
        })
        .collect()
}

impl ModelFile {
    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("cannot parse {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Validates the document and builds the solver-facing model.
    pub fn load(&self) -> Result<LoadedModel, Error> {
        let mut config = SolverConfig::default();
        if let Some(spec) = &self.config {
            if let Some(v) = spec.epsilon {
                config.epsilon = v;
            }
            if let Some(v) = spec.max_levels {
                config.max_levels = v;
            }
            if let Some(v) = spec.max_iterations {
                config.max_iterations = v;
            }
            if let Some(v) = spec.residual_tol {
                config.residual_tol = v;
            }
            if let Some(v) = spec.tail_mass_bound {
                config.tail_mass_bound = v;
            }
        }
        let forcing = match &self.forcing {
            None => None,
            Some(ForcingSpec::Name(name)) => Some(match name.as_str() {
                "level-times-phase" => ForcingFunction::LevelTimesPhase,
                "sqrt-level" => ForcingFunction::SqrtLevel,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown forcing {other:?}; use level-times-phase, sqrt-level, or a table"
                    )))
                }
            }),
            Some(ForcingSpec::Table { table }) => Some(ForcingFunction::Table(table.clone())),
        };

        let (blocks, dense, generator, block_size) = match self.kind {
            ModelKind::DtmcDense | ModelKind::CtmcDense => {
                let rows = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("dense kind needs `matrix`".into()))?;
                let m = DenseMatrix::from_rows(rows)?;
                let block_size = self.block_size.unwrap_or(1);
                if block_size == 0 || m.rows() % block_size != 0 {
                    return Err(Error::InvalidInput(format!(
                        "block_size {block_size} does not divide {} states",
                        m.rows()
                    )));
                }
                if self.kind == ModelKind::DtmcDense {
                    m.check_stochastic(1e-8)?;
                    (None, Some(m), None, block_size)
                } else {
                    let gen = Generator::new(m)?;
                    (None, None, Some(gen), block_size)
                }
            }
            ModelKind::Mg1
            | ModelKind::Gim1
            | ModelKind::Qbd
            | ModelKind::Gig1
            | ModelKind::MapG1Rca => {
                let spec = self
                    .blocks
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("block kind needs `blocks`".into()))?;
                let a = parse_block_map(&spec.a)?;
                let b = parse_block_map(&spec.b)?;
                let model = if self.kind == ModelKind::MapG1Rca {
                    build_map_g1_rca(b, a)?
                } else {
                    let m = self
                        .block_size
                        .or_else(|| b.values().next().map(DenseMatrix::rows))
                        .or_else(|| a.values().next().map(DenseMatrix::rows))
                        .ok_or_else(|| Error::InvalidInput("empty block maps".into()))?;
                    BlockSequences::new(m, a, b, spec.repeat_deepest_b)?
                };
                match self.kind {
                    ModelKind::Mg1 | ModelKind::Qbd if !model.has_single_step_down() => {
                        return Err(Error::InvalidInput(
                            "kind requires A_i = 0 for i < -1".into(),
                        ));
                    }
                    ModelKind::Gim1 | ModelKind::Qbd if !model.has_single_step_up() => {
                        return Err(Error::InvalidInput(
                            "kind requires A_i = B_i = 0 for i >= 2".into(),
                        ));
                    }
                    _ => {}
                }
                let m = model.block_size();
                (Some(model), None, None, m)
            }
        };

        let anchor = match &self.anchor {
            None => None,
            Some(AnchorSpec::Index(i)) => Some(*i),
            Some(AnchorSpec::LevelPhase([level, phase])) => {
                if *phase == 0 || *phase > block_size {
                    return Err(Error::InvalidInput(format!(
                        "phase {phase} out of range 1..={block_size}"
                    )));
                }
                Some(level * block_size + phase - 1)
            }
        };
        config.anchor = anchor;

        let censor_set = self.censor_set.clone().unwrap_or_else(|| vec![0]);
        if censor_set.is_empty() {
            return Err(Error::InvalidInput("censor_set must be nonempty".into()));
        }

        Ok(LoadedModel {
            kind: self.kind,
            block_size,
            blocks,
            dense,
            generator,
            forcing,
            anchor,
            censor_set,
            config,
        })
    }
}

/// Built-in example names accepted as `example <name>`.
pub const BUILTIN_NAMES: [&str; 2] = ["map-g1-neg", "scalar-gig1"];

/// Returns the built-in model document for a name.
pub fn builtin(name: &str) -> Result<ModelFile, Error> {
    match name {
        "map-g1-neg" => {
            let model = presets::map_g1_negative();
            Ok(ModelFile {
                kind: ModelKind::MapG1Rca,
                block_size: Some(model.block_size()),
                blocks: Some(BlocksSpec {
                    a: block_map_to_spec(model.a_blocks()),
                    b: block_map_to_spec(model.b_blocks()),
                    repeat_deepest_b: true,
                }),
                matrix: None,
                forcing: Some(ForcingSpec::Name("level-times-phase".into())),
                anchor: Some(AnchorSpec::LevelPhase([0, 1])),
                censor_set: None,
                config: None,
            })
        }
        "scalar-gig1" => {
            let model = presets::scalar_gig1();
            Ok(ModelFile {
                kind: ModelKind::MapG1Rca,
                block_size: Some(1),
                blocks: Some(BlocksSpec {
                    a: block_map_to_spec(model.a_blocks()),
                    b: block_map_to_spec(model.b_blocks()),
                    repeat_deepest_b: true,
                }),
                matrix: None,
                forcing: Some(ForcingSpec::Name("sqrt-level".into())),
                anchor: Some(AnchorSpec::Index(0)),
                censor_set: Some(presets::SCALAR_GIG1_CENSOR.to_vec()),
                config: None,
            })
        }
        other => Err(Error::InvalidInput(format!(
            "unknown example {other:?}; available: {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}
