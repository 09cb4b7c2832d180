//! Versioned JSON document for networks.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "variables": [{"id": "move", "domain_size": 3, "layer_tag": "competency"}],
//!   "factors": [{"scope": ["move"], "values": [0.8, 0.2, 0.0]}]
//! }
//! ```
//!
//! Each factor's scope lists the parents followed by the child; `values`
//! is row-major with the child varying fastest. Factors appear in variable
//! order.

use serde::{Deserialize, Serialize};

use super::{DiscreteVariable, FactorTable, InferenceError, Layer, Network};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub format_version: u32,
    pub variables: Vec<VariableEntry>,
    pub factors: Vec<FactorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableEntry {
    pub id: String,
    pub domain_size: usize,
    pub layer_tag: Layer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorEntry {
    pub scope: Vec<String>,
    pub values: Vec<f64>,
}

impl Network {
    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            format_version: NETWORK_FORMAT_VERSION,
            variables: self
                .variables()
                .iter()
                .map(|v| VariableEntry { id: v.name.clone(), domain_size: v.domain_size, layer_tag: v.layer })
                .collect(),
            factors: self
                .cpts()
                .iter()
                .map(|f| FactorEntry {
                    scope: f.scope().iter().map(|&v| self.variable(v).name.clone()).collect(),
                    values: f.values().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Network, InferenceError> {
        if doc.format_version != NETWORK_FORMAT_VERSION {
            return Err(InferenceError::Document(format!(
                "unsupported format_version {} (expected {NETWORK_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let variables: Vec<DiscreteVariable> = doc
            .variables
            .iter()
            .map(|v| DiscreteVariable::new(v.id.clone(), v.domain_size, v.layer_tag))
            .collect();
        let lookup = |name: &str| {
            variables
                .iter()
                .position(|v| v.name == name)
                .ok_or_else(|| InferenceError::UnknownVariable(name.to_string()))
        };
        let mut cpts = Vec::with_capacity(doc.factors.len());
        for entry in &doc.factors {
            let scope = entry.scope.iter().map(|n| lookup(n)).collect::<Result<Vec<_>, _>>()?;
            let cards = scope.iter().map(|&v| variables[v].domain_size).collect();
            cpts.push(FactorTable::new(scope, cards, entry.values.clone())?);
        }
        // Accept factors in any order as long as each variable has one.
        cpts.sort_by_key(|f| f.scope().last().copied());
        Network::new(variables, cpts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("network document serialises")
    }

    pub fn from_json(text: &str) -> Result<Network, InferenceError> {
        let doc: NetworkDocument = serde_json::from_str(text).map_err(|e| InferenceError::Document(e.to_string()))?;
        Network::from_document(&doc)
    }
}
