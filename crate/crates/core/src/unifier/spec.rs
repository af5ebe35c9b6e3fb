//! Mapping specifications and their two accepted JSON surface forms.
//!
//! *Nested* form (optionally wrapped in `uscp_mapping`):
//!
//! ```json
//! {"obs": {"cell_type": "celltype", "batch_id": "None", "pert_type": "drug",
//!          "is_control_logic": "df['drug'] == 'DMSO'", ...},
//!  "obsm": {"pert_mask_source": "drug", "pert_dose_source": "None"},
//!  "var": {"index_type": "Ensembl ID", "gene_symbol_col": "symbol"},
//!  "numerical": {"is_already_log1p": false, "normalization_required": true, "target_sum": 10000.0},
//!  "data_summary": "..."}
//! ```
//!
//! *Flat* form: one object per semantic key (`perturbation_type`,
//! `perturbation_name`, `dose_value`, `cell_line`, `control_status`, or any
//! canonical obs key), each either a plain string or a typed entry
//! `{"type": "direct" | "logic" | "constant" | "absent", ...}`.
//!
//! Both normalize to [`MappingSpec`], whose own serialization is the nested
//! form with typed entries. `docs/mapping-spec.md` has the full reference.

use indexmap::IndexMap;
use serde_json::{json, Map, Value};

use super::UnifierError;
use crate::dsl::{self, Expr};
use crate::model::{PertType, CANONICAL_OBS_KEYS};

/// How one canonical field is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Direct { source_key: String },
    Logic { expression: String, description: Option<String>, expr: Expr },
    Constant { value: Value },
    Absent,
}

impl Entry {
    pub fn logic(expression: &str) -> Result<Entry, dsl::DslError> {
        Ok(Entry::Logic { expression: expression.to_string(), description: None, expr: dsl::parse(expression)? })
    }

    fn to_json(&self) -> Value {
        match self {
            Entry::Direct { source_key } => json!({"type": "direct", "source_key": source_key}),
            Entry::Logic { expression, description, .. } => {
                let mut m = Map::new();
                m.insert("type".into(), "logic".into());
                m.insert("expression".into(), expression.clone().into());
                if let Some(d) = description {
                    m.insert("description".into(), d.clone().into());
                }
                Value::Object(m)
            }
            Entry::Constant { value } => json!({"type": "constant", "value": value}),
            Entry::Absent => json!({"type": "absent"}),
        }
    }

    /// Column names this entry reads.
    pub fn columns(&self) -> Vec<&str> {
        match self {
            Entry::Direct { source_key } => vec![source_key.as_str()],
            Entry::Logic { expr, .. } => expr.columns(),
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexType {
    Ensembl,
    Symbol,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsmSpec {
    pub pert_mask_source: String,
    pub pert_dose_source: Entry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarSpec {
    pub index_type: IndexType,
    pub gene_symbol_col: Option<String>,
}

impl Default for VarSpec {
    fn default() -> Self {
        VarSpec { index_type: IndexType::Ensembl, gene_symbol_col: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericalSpec {
    pub is_already_log1p: bool,
    pub normalization_required: bool,
    pub target_sum: f64,
}

impl Default for NumericalSpec {
    fn default() -> Self {
        NumericalSpec { is_already_log1p: false, normalization_required: true, target_sum: 1e4 }
    }
}

/// A validated mapping from a raw table to the canonical schema. `obs`
/// holds exactly one entry per canonical obs key, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingSpec {
    pub obs: IndexMap<String, Entry>,
    pub obsm: ObsmSpec,
    pub var: VarSpec,
    pub numerical: NumericalSpec,
    pub data_summary: String,
    /// Separator between members of a combination perturbation name.
    pub combo_delimiter: String,
}

impl MappingSpec {
    pub fn entry(&self, key: &str) -> &Entry {
        &self.obs[key]
    }

    pub fn from_json_str(text: &str) -> Result<Self, UnifierError> {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| UnifierError::Schema { violations: vec![format!("not valid JSON: {e}")] })?;
        Self::from_json(&v)
    }

    /// Accepts either surface form.
    pub fn from_json(v: &Value) -> Result<Self, UnifierError> {
        let Some(top) = v.as_object() else {
            return Err(UnifierError::Schema { violations: vec!["mapping must be a JSON object".into()] });
        };
        let mut errs = Vec::new();
        let spec = if let Some(inner) = top.get("uscp_mapping") {
            match inner.as_object() {
                Some(m) => {
                    let summary = m.get("data_summary").or_else(|| top.get("data_summary"));
                    parse_nested(m, summary, &mut errs)
                }
                None => {
                    errs.push("uscp_mapping: expected an object".into());
                    None
                }
            }
        } else if top.contains_key("obs") || top.contains_key("obsm") {
            parse_nested(top, top.get("data_summary"), &mut errs)
        } else if top.keys().any(|k| FLAT_KEYS.iter().any(|(f, _)| f == k)) {
            parse_flat(top, &mut errs)
        } else {
            errs.push("obs: missing block (expected `obs`, `uscp_mapping`, or flat per-key entries)".into());
            None
        };
        match spec {
            Some(s) if errs.is_empty() => Ok(s),
            _ => Err(first_dsl_error(errs)),
        }
    }

    pub fn to_json(&self) -> Value {
        let obs: Map<String, Value> = self.obs.iter().map(|(k, e)| (k.clone(), e.to_json())).collect();
        json!({
            "obs": obs,
            "obsm": {
                "pert_mask_source": self.obsm.pert_mask_source,
                "pert_dose_source": self.obsm.pert_dose_source.to_json(),
            },
            "var": {
                "index_type": match self.var.index_type { IndexType::Ensembl => "ensembl", IndexType::Symbol => "symbol" },
                "gene_symbol_col": self.var.gene_symbol_col,
            },
            "numerical": {
                "is_already_log1p": self.numerical.is_already_log1p,
                "normalization_required": self.numerical.normalization_required,
                "target_sum": self.numerical.target_sum,
            },
            "data_summary": self.data_summary,
            "combo_delimiter": self.combo_delimiter,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("spec serializes")
    }
}

/// DSL failures are reported verbatim as their own error variant.
fn first_dsl_error(errs: Vec<Violation>) -> UnifierError {
    let mut violations = Vec::new();
    for e in errs {
        match e {
            Violation::Dsl { key, source } if violations.is_empty() => {
                return UnifierError::Dsl { key, source };
            }
            Violation::Dsl { key, source } => violations.push(format!("{key}: {source}")),
            Violation::Msg(m) => violations.push(m),
        }
    }
    UnifierError::Schema { violations }
}

enum Violation {
    Msg(String),
    Dsl { key: String, source: dsl::DslError },
}

impl From<String> for Violation {
    fn from(s: String) -> Self {
        Violation::Msg(s)
    }
}

impl From<&str> for Violation {
    fn from(s: &str) -> Self {
        Violation::Msg(s.to_string())
    }
}

/// Flat surface keys and the canonical slot each one fills.
const FLAT_KEYS: [(&str, &str); 12] = [
    ("perturbation_type", "pert_type"),
    ("perturbation_name", "pert_mask_source"),
    ("dose_value", "pert_dose_source"),
    ("cell_line", "donor_id"),
    ("control_status", "is_control"),
    ("cell_type", "cell_type"),
    ("batch_id", "batch_id"),
    ("donor_id", "donor_id"),
    ("pert_type", "pert_type"),
    ("is_control", "is_control"),
    ("condition_name", "condition_name"),
    ("data_summary", "data_summary"),
];

fn is_none_str(s: &str) -> bool {
    matches!(s.trim(), "None" | "none" | "null" | "")
}

/// Reads one entry. A bare string means a column name for `Column` slots,
/// a constant for `Constant` slots, and an expression for `Logic` slots.
#[derive(Clone, Copy, PartialEq)]
enum Bare {
    Column,
    Constant,
    Logic,
}

fn parse_entry(key: &str, v: &Value, bare: Bare, errs: &mut Vec<Violation>) -> Option<Entry> {
    match v {
        Value::Null => Some(Entry::Absent),
        Value::String(s) if is_none_str(s) => Some(Entry::Absent),
        Value::String(s) => match bare {
            Bare::Column if s == "unknown" => Some(Entry::Absent),
            Bare::Column => Some(Entry::Direct { source_key: s.clone() }),
            Bare::Constant => Some(Entry::Constant { value: v.clone() }),
            Bare::Logic => logic_entry(key, s, None, errs),
        },
        Value::Bool(_) | Value::Number(_) => Some(Entry::Constant { value: v.clone() }),
        Value::Object(m) => {
            let ty = m.get("type").and_then(Value::as_str);
            let str_field = |f: &str, errs: &mut Vec<Violation>| match m.get(f).and_then(Value::as_str) {
                Some(s) => Some(s.to_string()),
                None => {
                    errs.push(format!("{key}.{f}: required string field missing").into());
                    None
                }
            };
            match ty {
                Some("direct") => str_field("source_key", errs).map(|source_key| Entry::Direct { source_key }),
                Some("logic") => {
                    let expression = str_field("expression", errs)?;
                    let description = m.get("description").and_then(Value::as_str).map(str::to_string);
                    logic_entry(key, &expression, description, errs)
                }
                Some("constant") => match m.get("value") {
                    Some(value) => Some(Entry::Constant { value: value.clone() }),
                    None => {
                        errs.push(format!("{key}.value: required field missing").into());
                        None
                    }
                },
                Some("absent") | Some("none") => Some(Entry::Absent),
                Some(other) => {
                    errs.push(format!("{key}.type: unknown entry type '{other}'").into());
                    None
                }
                None => {
                    errs.push(format!("{key}.type: missing").into());
                    None
                }
            }
        }
        Value::Array(_) => {
            errs.push(format!("{key}: arrays are not valid entries").into());
            None
        }
    }
}

fn logic_entry(key: &str, expression: &str, description: Option<String>, errs: &mut Vec<Violation>) -> Option<Entry> {
    match dsl::parse(expression) {
        Ok(expr) => Some(Entry::Logic { expression: expression.to_string(), description, expr }),
        Err(source) => {
            errs.push(Violation::Dsl { key: key.to_string(), source });
            None
        }
    }
}

fn check_entry(key: &str, e: &Entry, errs: &mut Vec<Violation>) {
    match (key, e) {
        ("pert_type", Entry::Constant { value }) => {
            let ok = value.as_str().is_some_and(|s| s.parse::<PertType>().is_ok());
            if !ok {
                errs.push(format!("pert_type: constant must be one of drug, crispr, mixed, control; got {value}").into());
            }
        }
        ("is_control", Entry::Constant { value }) if !value.is_boolean() => {
            errs.push(format!("is_control: constant must be a boolean, got {value}").into());
        }
        (_, Entry::Constant { value }) if value.is_object() || value.is_array() || value.is_null() => {
            errs.push(format!("{key}: constant must be a string, number or boolean").into());
        }
        _ => {}
    }
}

fn slot_bare(key: &str) -> Bare {
    match key {
        "pert_type" => Bare::Constant,
        "is_control" | "condition_name" => Bare::Logic,
        _ => Bare::Column,
    }
}

fn parse_nested(m: &Map<String, Value>, summary: Option<&Value>, errs: &mut Vec<Violation>) -> Option<MappingSpec> {
    let mut obs: IndexMap<String, Entry> = IndexMap::new();
    match m.get("obs").and_then(Value::as_object) {
        None => errs.push("obs: missing block".into()),
        Some(o) => {
            for (raw_key, v) in o {
                let key = raw_key.strip_suffix("_logic").unwrap_or(raw_key);
                let key = if key == "cell_line" { "donor_id" } else { key };
                if !CANONICAL_OBS_KEYS.contains(&key) {
                    errs.push(format!("obs.{raw_key}: not a canonical obs key").into());
                    continue;
                }
                if obs.contains_key(key) {
                    errs.push(format!("obs.{raw_key}: {key} mapped more than once").into());
                    continue;
                }
                if let Some(e) = parse_entry(&format!("obs.{raw_key}"), v, slot_bare(key), errs) {
                    check_entry(key, &e, errs);
                    obs.insert(key.to_string(), e);
                }
            }
        }
    }

    let obsm = match m.get("obsm").and_then(Value::as_object) {
        None => {
            errs.push("obsm: missing block".into());
            None
        }
        Some(o) => parse_obsm(o.get("pert_mask_source"), o.get("pert_dose_source"), "obsm.", errs),
    };
    let var = match m.get("var") {
        None => Some(VarSpec::default()),
        Some(v) => parse_var(v, errs),
    };
    let numerical = match m.get("numerical") {
        None => Some(NumericalSpec::default()),
        Some(v) => parse_numerical(v, errs),
    };
    let combo_delimiter = parse_delimiter(m.get("combo_delimiter"), errs);
    let data_summary = summary.and_then(Value::as_str).unwrap_or_default().to_string();
    Some(MappingSpec {
        obs: fill_obs(obs),
        obsm: obsm?,
        var: var?,
        numerical: numerical?,
        data_summary,
        combo_delimiter: combo_delimiter?,
    })
}

fn parse_flat(m: &Map<String, Value>, errs: &mut Vec<Violation>) -> Option<MappingSpec> {
    let mut obs: IndexMap<String, Entry> = IndexMap::new();
    let (mut mask, mut dose) = (None, None);
    for (k, v) in m {
        if matches!(k.as_str(), "var" | "numerical" | "combo_delimiter" | "data_summary") {
            continue;
        }
        let Some(&(_, slot)) = FLAT_KEYS.iter().find(|(f, _)| f == k) else {
            errs.push(format!("{k}: unknown mapping key").into());
            continue;
        };
        match slot {
            "pert_mask_source" => mask = Some(v),
            "pert_dose_source" => dose = Some(v),
            _ => {
                if obs.contains_key(slot) {
                    errs.push(format!("{k}: {slot} mapped more than once").into());
                    continue;
                }
                if let Some(e) = parse_entry(k, v, slot_bare(slot), errs) {
                    check_entry(slot, &e, errs);
                    obs.insert(slot.to_string(), e);
                }
            }
        }
    }
    if mask.is_none() {
        errs.push("perturbation_name: required (names the perturbation column)".into());
    }
    let obsm = parse_obsm(mask, dose, "", errs);
    let var = m.get("var").map_or(Some(VarSpec::default()), |v| parse_var(v, errs));
    let numerical = m.get("numerical").map_or(Some(NumericalSpec::default()), |v| parse_numerical(v, errs));
    let combo_delimiter = parse_delimiter(m.get("combo_delimiter"), errs);
    let data_summary = m.get("data_summary").and_then(Value::as_str).unwrap_or_default().to_string();
    Some(MappingSpec {
        obs: fill_obs(obs),
        obsm: obsm?,
        var: var?,
        numerical: numerical?,
        data_summary,
        combo_delimiter: combo_delimiter?,
    })
}

fn fill_obs(mut obs: IndexMap<String, Entry>) -> IndexMap<String, Entry> {
    CANONICAL_OBS_KEYS.iter().map(|k| (k.to_string(), obs.shift_remove(*k).unwrap_or(Entry::Absent))).collect()
}

fn parse_obsm(mask: Option<&Value>, dose: Option<&Value>, prefix: &str, errs: &mut Vec<Violation>) -> Option<ObsmSpec> {
    let mask_key = format!("{prefix}pert_mask_source");
    let pert_mask_source = match mask.map(|v| parse_entry(&mask_key, v, Bare::Column, errs)) {
        Some(Some(Entry::Direct { source_key })) => Some(source_key),
        Some(None) => None,
        Some(Some(_)) => {
            errs.push(format!("{mask_key}: must name a column").into());
            None
        }
        None => {
            if !prefix.is_empty() {
                errs.push(format!("{mask_key}: required").into());
            }
            None
        }
    };
    let dose_key = format!("{prefix}pert_dose_source");
    let pert_dose_source = match dose {
        None => Some(Entry::Absent),
        Some(v) => parse_entry(&dose_key, v, Bare::Column, errs),
    };
    if let Some(Entry::Constant { value }) = &pert_dose_source {
        if !value.is_number() {
            errs.push(format!("{dose_key}: constant dose must be a number").into());
        }
    }
    Some(ObsmSpec { pert_mask_source: pert_mask_source?, pert_dose_source: pert_dose_source? })
}

fn parse_var(v: &Value, errs: &mut Vec<Violation>) -> Option<VarSpec> {
    let Some(m) = v.as_object() else {
        errs.push("var: expected an object".into());
        return None;
    };
    let index_type = match m.get("index_type").and_then(Value::as_str).map(|s| s.to_ascii_lowercase()) {
        None => IndexType::Ensembl,
        Some(s) if s.contains("ensembl") => IndexType::Ensembl,
        Some(s) if s.contains("symbol") => IndexType::Symbol,
        Some(s) => {
            errs.push(format!("var.index_type: expected ensembl or symbol, got '{s}'").into());
            return None;
        }
    };
    let gene_symbol_col = match m.get("gene_symbol_col") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if is_none_str(s) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            errs.push("var.gene_symbol_col: expected a column name".into());
            return None;
        }
    };
    Some(VarSpec { index_type, gene_symbol_col })
}

fn parse_numerical(v: &Value, errs: &mut Vec<Violation>) -> Option<NumericalSpec> {
    let Some(m) = v.as_object() else {
        errs.push("numerical: expected an object".into());
        return None;
    };
    let d = NumericalSpec::default();
    let mut ok = true;
    let mut flag = |name: &str, default: bool| match m.get(name) {
        None => default,
        Some(Value::Bool(b)) => *b,
        Some(other) => {
            errs.push(format!("numerical.{name}: expected a boolean, got {other}").into());
            ok = false;
            default
        }
    };
    let is_already_log1p = flag("is_already_log1p", d.is_already_log1p);
    let normalization_required = flag("normalization_required", d.normalization_required);
    let target_sum = match m.get("target_sum") {
        None => d.target_sum,
        Some(v) => match v.as_f64() {
            Some(t) if t > 0.0 && t.is_finite() => t,
            _ => {
                errs.push(format!("numerical.target_sum: expected a positive number, got {v}").into());
                ok = false;
                d.target_sum
            }
        },
    };
    ok.then_some(NumericalSpec { is_already_log1p, normalization_required, target_sum })
}

fn parse_delimiter(v: Option<&Value>, errs: &mut Vec<Violation>) -> Option<String> {
    match v {
        None => Some("+".into()),
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(other) => {
            errs.push(format!("combo_delimiter: expected a nonempty string, got {other}").into());
            None
        }
    }
}
