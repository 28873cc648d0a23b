//! JSON instance files.
//!
//! Ids are strings unique across facilities and clients. Positions follow
//! file order, facilities first; an explicit `matrix` is indexed the same way.
//!
//! ```json
//! {
//!   "facilities": [{"id": "a", "weight": 2}],
//!   "clients": [{"id": "x", "discount": 0.5}],
//!   "metric": {"type": "euclidean", "coords": {"a": [0, 0], "x": [3, 4]}},
//!   "constraint": {"type": "knapsack", "budget": 3}
//! }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use meddis_core::instance::Violation;
use meddis_core::matroid::ExplicitMatroid;
use meddis_core::stochastic::{StochasticInstance, StochasticPoint};
use meddis_core::{Constraint, Instance, MatroidSpec, MetricSpace};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEntry {
    pub id: String,
    #[serde(default)]
    pub discount: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MetricEntry {
    Explicit { matrix: Vec<Vec<f64>> },
    Euclidean { coords: BTreeMap<String, [f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MatroidEntry {
    Uniform {
        rank: usize,
    },
    Partition {
        parts: Vec<Vec<String>>,
        caps: Vec<usize>,
    },
    /// Either `bases` (lists of facility ids) or `rankTable` (rank of every
    /// facility subset, indexed by bitmask over facility positions).
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bases: Option<Vec<Vec<String>>>,
        #[serde(default, rename = "rankTable", skip_serializing_if = "Option::is_none")]
        rank_table: Option<Vec<u8>>,
    },
    /// Facility `id` is the edge `[u, v]` of a multigraph on `vertices` vertices.
    Graphic {
        vertices: usize,
        edges: BTreeMap<String, [usize; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ConstraintEntry {
    Cardinality { k: usize },
    Matroid { matroid: MatroidEntry },
    Knapsack { budget: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEntry {
    pub id: String,
    pub dist: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub facilities: Vec<FacilityEntry>,
    pub clients: Vec<ClientEntry>,
    pub metric: MetricEntry,
    pub constraint: ConstraintEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<PointEntry>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemaError {
    Json(String),
    DuplicateId(String),
    UnknownId(String),
    MissingCoords(String),
    Matrix(String),
    Invalid(Vec<String>),
    Core(String),
    NoPoints,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaError::Json(e) => write!(f, "malformed JSON: {e}"),
            SchemaError::DuplicateId(id) => write!(f, "duplicate id {id:?}"),
            SchemaError::UnknownId(id) => write!(f, "unknown id {id:?}"),
            SchemaError::MissingCoords(id) => write!(f, "no coordinates for {id:?}"),
            SchemaError::Matrix(e) => write!(f, "bad distance matrix: {e}"),
            SchemaError::Invalid(v) => write!(f, "invalid instance: {}", v.join("; ")),
            SchemaError::Core(e) => write!(f, "{e}"),
            SchemaError::NoPoints => write!(f, "stochastic instance needs a `points` array"),
        }
    }
}

impl std::error::Error for SchemaError {}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files always serialize")
    }

    /// Builds and validates the core instance.
    pub fn to_instance(&self) -> Result<Instance, SchemaError> {
        let nf = self.facilities.len();
        let ids: Vec<String> = self
            .facilities
            .iter()
            .map(|f| f.id.clone())
            .chain(self.clients.iter().map(|c| c.id.clone()))
            .collect();
        let mut pos: HashMap<&str, usize> = HashMap::new();
        for (p, id) in ids.iter().enumerate() {
            if pos.insert(id, p).is_some() {
                return Err(SchemaError::DuplicateId(id.clone()));
            }
        }
        let metric = match &self.metric {
            MetricEntry::Explicit { matrix } => {
                MetricSpace::from_rows(matrix).map_err(|e| SchemaError::Matrix(e.to_string()))?
            }
            MetricEntry::Euclidean { coords } => {
                for id in coords.keys() {
                    if !pos.contains_key(id.as_str()) {
                        return Err(SchemaError::UnknownId(id.clone()));
                    }
                }
                let pts = ids
                    .iter()
                    .map(|id| coords.get(id).map(|c| (c[0], c[1])).ok_or_else(|| SchemaError::MissingCoords(id.clone())))
                    .collect::<Result<Vec<_>, _>>()?;
                MetricSpace::euclidean(&pts)
            }
        };
        if metric.len() != ids.len() {
            return Err(SchemaError::Matrix(format!("{} rows for {} sites", metric.len(), ids.len())));
        }
        let facility = |id: &String| -> Result<usize, SchemaError> {
            pos.get(id.as_str()).copied().filter(|&p| p < nf).ok_or_else(|| SchemaError::UnknownId(id.clone()))
        };
        let constraint = match &self.constraint {
            ConstraintEntry::Cardinality { k } => Constraint::Cardinality { k: *k },
            ConstraintEntry::Knapsack { budget } => Constraint::Knapsack {
                weights: self.facilities.iter().map(|f| f.weight.unwrap_or(1.0)).collect(),
                budget: *budget,
            },
            ConstraintEntry::Matroid { matroid } => Constraint::Matroid(match matroid {
                MatroidEntry::Uniform { rank } => MatroidSpec::Uniform { rank: *rank },
                MatroidEntry::Partition { parts, caps } => MatroidSpec::Partition {
                    parts: parts
                        .iter()
                        .map(|part| part.iter().map(facility).collect::<Result<Vec<_>, _>>())
                        .collect::<Result<_, _>>()?,
                    caps: caps.clone(),
                },
                MatroidEntry::Explicit { bases, rank_table } => {
                    let m = match (bases, rank_table) {
                        (Some(bases), _) => {
                            let bases = bases
                                .iter()
                                .map(|b| b.iter().map(facility).collect::<Result<Vec<_>, _>>())
                                .collect::<Result<Vec<_>, _>>()?;
                            ExplicitMatroid::from_bases(nf, &bases)
                        }
                        (None, Some(table)) => ExplicitMatroid::from_rank_table(nf, table.clone()),
                        (None, None) => {
                            return Err(SchemaError::Invalid(vec!["explicit matroid needs bases or rankTable".into()]))
                        }
                    };
                    MatroidSpec::Explicit(m.map_err(|e| SchemaError::Core(e.to_string()))?)
                }
                MatroidEntry::Graphic { vertices, edges } => {
                    let mut list = Vec::with_capacity(nf);
                    for f in &self.facilities {
                        let e = edges.get(&f.id).ok_or_else(|| SchemaError::UnknownId(f.id.clone()))?;
                        list.push((e[0], e[1]));
                    }
                    MatroidSpec::Explicit(
                        ExplicitMatroid::graphic(*vertices, &list).map_err(|e| SchemaError::Core(e.to_string()))?,
                    )
                }
            }),
        };
        let mut inst = Instance::new(
            ids,
            metric,
            (0..nf).collect(),
            (nf..nf + self.clients.len()).collect(),
            self.clients.iter().map(|c| c.discount).collect(),
            constraint,
        );
        inst.client_weights = self.clients.iter().map(|c| c.weight.unwrap_or(1.0)).collect();
        let violations: Vec<Violation> = inst.validate();
        if !violations.is_empty() {
            return Err(SchemaError::Invalid(violations.iter().map(|v| v.to_string()).collect()));
        }
        Ok(inst)
    }

    pub fn to_stochastic(&self) -> Result<StochasticInstance, SchemaError> {
        let base = self.to_instance()?;
        let points = self.points.as_ref().ok_or(SchemaError::NoPoints)?;
        let nf = base.n_facilities();
        let client_pos: HashMap<&str, usize> =
            self.clients.iter().enumerate().map(|(j, c)| (c.id.as_str(), j)).collect();
        let points = points
            .iter()
            .map(|p| {
                let dist = p
                    .dist
                    .iter()
                    .map(|(id, &q)| {
                        client_pos.get(id.as_str()).map(|&j| (j, q)).ok_or_else(|| SchemaError::UnknownId(id.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(StochasticPoint { id: p.id.clone(), dist })
            })
            .collect::<Result<Vec<_>, SchemaError>>()?;
        let stoch = StochasticInstance { base, points };
        stoch.validate().map_err(|e| SchemaError::Core(e.to_string()))?;
        debug_assert_eq!(stoch.base.facilities, (0..nf).collect::<Vec<_>>());
        Ok(stoch)
    }

    /// File form of a core instance. The metric is written as an explicit
    /// matrix in input units.
    pub fn from_instance(inst: &Instance) -> Self {
        let knap = match &inst.constraint {
            Constraint::Knapsack { weights, .. } => Some(weights),
            _ => None,
        };
        let facilities = (0..inst.n_facilities())
            .map(|i| FacilityEntry { id: inst.facility_id(i).to_string(), weight: knap.map(|w| w[i]) })
            .collect();
        let clients = (0..inst.n_clients())
            .map(|j| ClientEntry {
                id: inst.client_id(j).to_string(),
                discount: inst.discounts[j] * inst.scale,
                weight: (inst.client_weights[j] != 1.0).then_some(inst.client_weights[j]),
            })
            .collect();
        let order: Vec<usize> = inst.facilities.iter().chain(&inst.clients).copied().collect();
        let matrix = order.iter().map(|&p| order.iter().map(|&q| inst.metric.d(p, q) * inst.scale).collect()).collect();
        let fid = |i: &usize| inst.facility_id(*i).to_string();
        let constraint = match &inst.constraint {
            Constraint::Cardinality { k } => ConstraintEntry::Cardinality { k: *k },
            Constraint::Knapsack { budget, .. } => ConstraintEntry::Knapsack { budget: *budget },
            Constraint::Matroid(m) => ConstraintEntry::Matroid {
                matroid: match m {
                    MatroidSpec::Uniform { rank } => MatroidEntry::Uniform { rank: *rank },
                    MatroidSpec::Partition { parts, caps } => MatroidEntry::Partition {
                        parts: parts.iter().map(|p| p.iter().map(fid).collect()).collect(),
                        caps: caps.clone(),
                    },
                    MatroidSpec::Explicit(e) => MatroidEntry::Explicit { bases: None, rank_table: Some(e.table().to_vec()) },
                },
            },
        };
        InstanceFile { facilities, clients, metric: MetricEntry::Explicit { matrix }, constraint, points: None }
    }

    pub fn from_stochastic(stoch: &StochasticInstance) -> Self {
        let mut file = Self::from_instance(&stoch.base);
        file.points = Some(
            stoch
                .points
                .iter()
                .map(|p| PointEntry {
                    id: p.id.clone(),
                    dist: p.dist.iter().map(|&(j, q)| (stoch.base.client_id(j).to_string(), q)).collect(),
                })
                .collect(),
        );
        file
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "facilities": [{"id": "a", "weight": 2}, {"id": "b"}],
        "clients": [{"id": "x", "discount": 0.5}, {"id": "y", "discount": 0, "weight": 3}],
        "metric": {"type": "euclidean", "coords": {"a": [0, 0], "b": [10, 0], "x": [3, 4], "y": [10, 1]}},
        "constraint": {"type": "knapsack", "budget": 3}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let file = InstanceFile::parse(SMALL).unwrap();
        let inst = file.to_instance().unwrap();
        assert_eq!(inst.fc(0, 0), 5.0);
        assert_eq!(inst.client_weights, vec![1.0, 3.0]);
        let Constraint::Knapsack { weights, budget } = &inst.constraint else { panic!() };
        assert_eq!((weights.clone(), *budget), (vec![2.0, 1.0], 3.0));
        let back = InstanceFile::from_instance(&inst).to_instance().unwrap();
        assert_eq!(back.discounts, inst.discounts);
        assert_eq!(back.fc(1, 1), inst.fc(1, 1));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let text = SMALL.replace(r#""id": "b""#, r#""id": "a""#);
        assert!(matches!(InstanceFile::parse(&text).unwrap().to_instance(), Err(SchemaError::DuplicateId(_))));
    }

    #[test]
    fn rejects_missing_coords() {
        let text = SMALL.replace(r#", "y": [10, 1]"#, "");
        assert!(matches!(InstanceFile::parse(&text).unwrap().to_instance(), Err(SchemaError::MissingCoords(_))));
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(InstanceFile::parse("{"), Err(SchemaError::Json(_))));
    }
}
