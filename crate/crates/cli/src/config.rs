//! Run configuration: symbols, expressions and command parameters.

use std::collections::BTreeMap;
use std::path::Path;

use finsec::opexpr::SymbolTable;
use finsec::symbol::SymbolLiteral;
use finsec::symbolmaps::{parse_seq, SeqExpr};
use serde::Deserialize;

use crate::failure::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    symbols: BTreeMap<String, SymbolLiteral>,
    #[serde(default)]
    expressions: BTreeMap<String, String>,
    #[serde(default)]
    params: RawParams,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    ns: Option<Vec<usize>>,
    windows: Option<Vec<usize>>,
    grids: Option<Vec<usize>>,
    floor: Option<f64>,
    margin: Option<usize>,
    probe_window: Option<usize>,
    targets: Option<Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct Params {
    /// Section sizes for `sections`, `sweep` and `maps`.
    pub ns: Vec<usize>,
    /// Windows for the compressions and observed sweep in `report`.
    pub windows: Vec<usize>,
    /// Cells per unit for local symbol discretizations.
    pub grids: Vec<usize>,
    pub floor: f64,
    pub margin: Option<usize>,
    /// Observation window for the strong limit oracle in `maps`.
    pub probe_window: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            ns: vec![4, 8, 16, 32, 64],
            windows: vec![16, 32, 64, 128],
            grids: vec![32, 64, 128],
            floor: 1e-6,
            margin: None,
            probe_window: 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub symbols: SymbolTable,
    /// Expressions in name order, restricted to the targets when given.
    pub expressions: Vec<(String, SeqExpr)>,
    pub params: Params,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '+' | '.'))
}

fn positive_list(
    key: &str,
    v: Option<Vec<usize>>,
    default: Vec<usize>,
) -> Result<Vec<usize>, Failure> {
    let v = v.unwrap_or(default);
    if v.is_empty() || v.contains(&0) {
        return Err(Failure::Validation(format!(
            "params.{key} must be a nonempty list of positive integers"
        )));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Validation(format!(
            "params.{key} must be strictly increasing"
        )));
    }
    Ok(v)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Failure::Parse(e.to_string()))?;
        Self::build(raw)
    }

    /// Empty configuration with default parameters.
    pub fn empty() -> Self {
        Self {
            symbols: SymbolTable::new(),
            expressions: Vec::new(),
            params: Params::default(),
        }
    }

    fn build(raw: RawConfig) -> Result<Self, Failure> {
        let mut symbols = SymbolTable::new();
        for (name, lit) in &raw.symbols {
            let sym = lit
                .build()
                .map_err(|e| Failure::from_core(e).context(&format!("symbol `{name}`")))?;
            symbols.insert(name.clone(), sym);
        }

        let p = raw.params;
        let d = Params::default();
        let floor = p.floor.unwrap_or(d.floor);
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Failure::Validation("params.floor must be positive".into()));
        }
        let probe_window = p.probe_window.unwrap_or(d.probe_window);
        if probe_window == 0 {
            return Err(Failure::Validation(
                "params.probe_window must be positive".into(),
            ));
        }
        if p.margin == Some(0) {
            return Err(Failure::Validation("params.margin must be positive".into()));
        }
        let params = Params {
            ns: positive_list("ns", p.ns, d.ns)?,
            windows: positive_list("windows", p.windows, d.windows)?,
            grids: positive_list("grids", p.grids, d.grids)?,
            floor,
            margin: p.margin,
            probe_window,
        };

        if let Some(targets) = &p.targets {
            for t in targets {
                if !raw.expressions.contains_key(t) {
                    return Err(Failure::Validation(format!(
                        "target `{t}` is not a defined expression"
                    )));
                }
            }
        }
        let mut expressions = Vec::new();
        for (name, src) in &raw.expressions {
            if !valid_name(name) {
                return Err(Failure::Validation(format!(
                    "expression name `{name}` may only use letters, digits and _-+."
                )));
            }
            if p.targets.as_ref().is_some_and(|t| !t.contains(name)) {
                continue;
            }
            let s = parse_seq(src, &symbols)
                .map_err(|e| Failure::from_core(e).context(&format!("expression `{name}`")))?;
            expressions.push((name.clone(), s));
        }
        Ok(Self {
            symbols,
            expressions,
            params,
        })
    }
}
