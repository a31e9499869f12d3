//! Distribution feeders with switchable edges, microgrid partitioning and
//! the coalition scenarios studied on top of a partition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::error::{Error, Result};

/// Example 123-bus feeder with 11 switches that splits into five
/// microgrids of 113, 106, 161, 88 and 48 houses under its `default_open`
/// switch set.
pub const BUNDLED_FEEDER_JSON: &str = include_str!("../data/feeder123.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Line,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeederEdge {
    pub a: String,
    pub b: String,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchState {
    Open,
    Closed,
}

pub type SwitchStates = BTreeMap<String, SwitchState>;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawFeeder {
    nodes: Vec<String>,
    edges: Vec<FeederEdge>,
    houses: BTreeMap<String, String>,
    #[serde(default)]
    default_open: Vec<String>,
}

/// Feeder graph. Node order matters: microgrids are numbered by their
/// first node in this order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawFeeder", into = "RawFeeder")]
pub struct FeederGraph {
    nodes: Vec<String>,
    edges: Vec<FeederEdge>,
    houses: BTreeMap<String, String>,
    default_open: Vec<String>,
    node_index: HashMap<String, usize>,
    // (a, b) node indices per edge
    endpoints: Vec<(usize, usize)>,
}

impl TryFrom<RawFeeder> for FeederGraph {
    type Error = Error;

    fn try_from(raw: RawFeeder) -> Result<Self> {
        FeederGraph::new(raw.nodes, raw.edges, raw.houses, raw.default_open)
    }
}

impl From<FeederGraph> for RawFeeder {
    fn from(f: FeederGraph) -> Self {
        RawFeeder {
            nodes: f.nodes,
            edges: f.edges,
            houses: f.houses,
            default_open: f.default_open,
        }
    }
}

impl FeederGraph {
    pub fn new(
        nodes: Vec<String>,
        edges: Vec<FeederEdge>,
        houses: BTreeMap<String, String>,
        default_open: Vec<String>,
    ) -> Result<Self> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate node {n}")));
            }
        }
        let lookup = |n: &str| {
            node_index
                .get(n)
                .copied()
                .ok_or_else(|| Error::Config(format!("edge references unknown node {n}")))
        };
        let mut endpoints = Vec::with_capacity(edges.len());
        let mut switch_ids = BTreeSet::new();
        for e in &edges {
            endpoints.push((lookup(&e.a)?, lookup(&e.b)?));
            match (e.kind, &e.switch_id) {
                (EdgeKind::Switch, Some(id)) => {
                    if !switch_ids.insert(id.clone()) {
                        return Err(Error::Config(format!("duplicate switch id {id}")));
                    }
                }
                (EdgeKind::Switch, None) => {
                    return Err(Error::Config(format!("switch edge {}-{} has no switch_id", e.a, e.b)))
                }
                (EdgeKind::Line, Some(id)) => {
                    return Err(Error::Config(format!("line edge {}-{} carries switch id {id}", e.a, e.b)))
                }
                (EdgeKind::Line, None) => {}
            }
        }
        for (house, node) in &houses {
            if !node_index.contains_key(node) {
                return Err(Error::Config(format!("house {house} maps to unknown node {node}")));
            }
        }
        for id in &default_open {
            if !switch_ids.contains(id) {
                return Err(Error::Config(format!("default_open names unknown switch {id}")));
            }
        }
        let feeder = Self {
            nodes,
            edges,
            houses,
            default_open,
            node_index,
            endpoints,
        };
        let closed = feeder.components(|_| true);
        if closed.len() > 1 {
            return Err(Error::Config(format!(
                "feeder is disconnected with every switch closed ({} components)",
                closed.len()
            )));
        }
        Ok(feeder)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::from_json(&text)
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_FEEDER_JSON).expect("bundled feeder is valid")
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[FeederEdge] {
        &self.edges
    }

    pub fn houses(&self) -> &BTreeMap<String, String> {
        &self.houses
    }

    pub fn default_open(&self) -> &[String] {
        &self.default_open
    }

    pub fn switch_ids(&self) -> impl Iterator<Item = &str> {
        self.edges.iter().filter_map(|e| e.switch_id.as_deref())
    }

    /// Switch state with exactly the given switches open.
    pub fn switch_state_with_open<S: AsRef<str>>(&self, open: &[S]) -> Result<SwitchStates> {
        let mut state: SwitchStates = self
            .switch_ids()
            .map(|id| (id.to_string(), SwitchState::Closed))
            .collect();
        for id in open {
            let id = id.as_ref();
            match state.get_mut(id) {
                Some(s) => *s = SwitchState::Open,
                None => return Err(Error::Config(format!("unknown switch id {id}"))),
            }
        }
        Ok(state)
    }

    pub fn default_switch_state(&self) -> SwitchStates {
        self.switch_state_with_open(&self.default_open)
            .expect("default_open validated at construction")
    }

    /// Node-index components over the edges for which `keep` is true,
    /// ordered by smallest node index; each component is sorted.
    fn components(&self, keep: impl Fn(&FeederEdge) -> bool) -> Vec<Vec<usize>> {
        let mut dsu = DisjointSet::new(self.nodes.len());
        for (e, &(a, b)) in self.edges.iter().zip(&self.endpoints) {
            if keep(e) {
                dsu.union(a as u32, b as u32);
            }
        }
        let mut by_root: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for i in 0..self.nodes.len() {
            let r = dsu.find(i as u32);
            by_root.entry(r).or_default().push(i);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }
}

/// One island of the feeder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Microgrid {
    /// Roman numeral, `I` for the microgrid holding the first node.
    pub id: String,
    pub nodes: Vec<String>,
    /// Sorted house ids.
    pub houses: Vec<String>,
}

impl Microgrid {
    pub fn name(&self) -> String {
        format!("MG-{}", self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicrogridPartition {
    pub microgrids: Vec<Microgrid>,
    pub switch_state: SwitchStates,
}

impl MicrogridPartition {
    /// Index of the microgrid containing `node`.
    pub fn microgrid_of_node(&self, node: &str) -> Option<usize> {
        self.microgrids
            .iter()
            .position(|m| m.nodes.iter().any(|n| n == node))
    }
}

pub fn roman_numeral(mut n: usize) -> String {
    const TABLE: [(usize, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for &(value, digits) in &TABLE {
        while n >= value {
            out.push_str(digits);
            n -= value;
        }
    }
    out
}

/// Splits the feeder into microgrids: connected components once every open
/// switch is removed.
pub fn partition(feeder: &FeederGraph, switch_state: &SwitchStates) -> Result<MicrogridPartition> {
    let known: BTreeSet<&str> = feeder.switch_ids().collect();
    if let Some(unknown) = switch_state.keys().find(|k| !known.contains(k.as_str())) {
        return Err(Error::Config(format!("unknown switch id {unknown}")));
    }
    if let Some(missing) = known.iter().find(|k| !switch_state.contains_key(**k)) {
        return Err(Error::Config(format!("switch {missing} has no state")));
    }

    let comps = feeder.components(|e| match &e.switch_id {
        Some(id) => switch_state[id] == SwitchState::Closed,
        None => true,
    });
    let mut comp_of_node = vec![0usize; feeder.nodes.len()];
    for (c, nodes) in comps.iter().enumerate() {
        for &n in nodes {
            comp_of_node[n] = c;
        }
    }
    let mut houses: Vec<Vec<String>> = vec![Vec::new(); comps.len()];
    for (house, node) in &feeder.houses {
        houses[comp_of_node[feeder.node_index[node]]].push(house.clone());
    }
    let microgrids = comps
        .iter()
        .zip(houses)
        .enumerate()
        .map(|(i, (nodes, houses))| Microgrid {
            id: roman_numeral(i + 1),
            nodes: nodes.iter().map(|&n| feeder.nodes[n].clone()).collect(),
            houses,
        })
        .collect();
    Ok(MicrogridPartition {
        microgrids,
        switch_state: switch_state.clone(),
    })
}

/// Pairs of microgrids joined by at least one switch, as sorted index pairs.
pub fn neighboring_pairs(feeder: &FeederGraph, partition: &MicrogridPartition) -> Vec<(usize, usize)> {
    let mut owner = vec![usize::MAX; feeder.nodes.len()];
    for (m, mg) in partition.microgrids.iter().enumerate() {
        for n in &mg.nodes {
            if let Some(&i) = feeder.node_index.get(n) {
                owner[i] = m;
            }
        }
    }
    let pairs: BTreeSet<(usize, usize)> = feeder
        .edges
        .iter()
        .zip(&feeder.endpoints)
        .filter(|(e, _)| e.kind == EdgeKind::Switch)
        .filter_map(|(_, &(a, b))| {
            let (ma, mb) = (owner[a], owner[b]);
            (ma != mb && ma != usize::MAX && mb != usize::MAX).then(|| (ma.min(mb), ma.max(mb)))
        })
        .collect();
    pairs.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Single,
    Pair,
    All,
}

/// A coalition of houses settled together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    /// Indices into the partition's microgrids.
    pub microgrids: Vec<usize>,
    pub houses: Vec<String>,
}

/// A scenario evaluated with or without P2P sharing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioVariant<'a> {
    pub scenario: &'a Scenario,
    pub p2p: bool,
}

/// Every single microgrid, every neighboring pair and (with two or more
/// microgrids) the union of all of them.
pub fn scenario_set(partition: &MicrogridPartition, pairs: &[(usize, usize)]) -> Vec<Scenario> {
    let mgs = &partition.microgrids;
    let union = |idx: &[usize]| {
        let mut houses: Vec<String> = idx.iter().flat_map(|&i| mgs[i].houses.iter().cloned()).collect();
        houses.sort();
        houses
    };
    let mut out: Vec<Scenario> = (0..mgs.len())
        .map(|i| Scenario {
            name: mgs[i].name(),
            kind: ScenarioKind::Single,
            microgrids: vec![i],
            houses: mgs[i].houses.clone(),
        })
        .collect();
    out.extend(pairs.iter().map(|&(a, b)| Scenario {
        name: format!("{} & {}", mgs[a].name(), mgs[b].id),
        kind: ScenarioKind::Pair,
        microgrids: vec![a, b],
        houses: union(&[a, b]),
    }));
    if mgs.len() > 1 {
        let all: Vec<usize> = (0..mgs.len()).collect();
        out.push(Scenario {
            name: "ALL MGs".to_string(),
            kind: ScenarioKind::All,
            houses: union(&all),
            microgrids: all,
        });
    }
    out
}

/// Without-P2P then with-P2P variant of each scenario.
pub fn variants(scenarios: &[Scenario]) -> Vec<ScenarioVariant<'_>> {
    scenarios
        .iter()
        .flat_map(|s| [false, true].map(|p2p| ScenarioVariant { scenario: s, p2p }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioSelection {
    Singles,
    Pairs,
    All,
    #[default]
    Everything,
}

impl ScenarioSelection {
    pub fn includes(self, kind: ScenarioKind) -> bool {
        match self {
            ScenarioSelection::Singles => kind == ScenarioKind::Single,
            ScenarioSelection::Pairs => kind == ScenarioKind::Pair,
            ScenarioSelection::All => kind == ScenarioKind::All,
            ScenarioSelection::Everything => true,
        }
    }
}

impl FromStr for ScenarioSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singles" => Ok(Self::Singles),
            "pairs" => Ok(Self::Pairs),
            "all" => Ok(Self::All),
            "everything" => Ok(Self::Everything),
            other => Err(Error::Config(format!(
                "unknown scenario selection {other:?} (singles|pairs|all|everything)"
            ))),
        }
    }
}

impl fmt::Display for ScenarioSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Singles => "singles",
            Self::Pairs => "pairs",
            Self::All => "all",
            Self::Everything => "everything",
        })
    }
}
