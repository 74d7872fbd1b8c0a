//! Model description: species, reactions, geometry and run configuration.
//!
//! A model file is a JSON document with the top-level keys `domain`,
//! `species`, `reactions` and `config` (see `docs/model-schema.md`). Parsing
//! produces a [`ModelFile`]; [`validate_model`] collects every well-formedness
//! violation, and [`Model::compile`] resolves species names into indices and
//! builds the lookup tables the solvers use.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SpeciesId = usize;
pub type ReactionId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Uniform,
    FixedPoint([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesSpec {
    pub name: String,
    #[serde(rename = "D")]
    pub diffusion: f64,
    pub sigma: f64,
    #[serde(default)]
    pub initial_count: u32,
    #[serde(default)]
    pub initial_placement: Placement,
}

impl SpeciesSpec {
    pub fn new(name: &str, diffusion: f64, sigma: f64) -> Self {
        Self {
            name: name.to_string(),
            diffusion,
            sigma,
            initial_count: 0,
            initial_placement: Placement::Uniform,
        }
    }

    pub fn with_count(mut self, n: u32) -> Self {
        self.initial_count = n;
        self
    }

    pub fn fixed_at(mut self, p: [f64; 3]) -> Self {
        self.initial_placement = Placement::FixedPoint(p);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reaction {
    Unimolecular {
        reactant: String,
        products: Vec<String>,
        k: f64,
    },
    Bimolecular {
        reactant_a: String,
        reactant_b: String,
        products: Vec<String>,
        k_a: f64,
    },
}

impl Reaction {
    pub fn uni(reactant: &str, products: &[&str], k: f64) -> Self {
        Reaction::Unimolecular {
            reactant: reactant.into(),
            products: products.iter().map(|s| s.to_string()).collect(),
            k,
        }
    }

    pub fn bi(a: &str, b: &str, products: &[&str], k_a: f64) -> Self {
        Reaction::Bimolecular {
            reactant_a: a.into(),
            reactant_b: b.into(),
            products: products.iter().map(|s| s.to_string()).collect(),
            k_a,
        }
    }

    pub fn products(&self) -> &[String] {
        match self {
            Reaction::Unimolecular { products, .. } | Reaction::Bimolecular { products, .. } => products,
        }
    }

    pub fn reactants(&self) -> Vec<&str> {
        match self {
            Reaction::Unimolecular { reactant, .. } => vec![reactant],
            Reaction::Bimolecular {
                reactant_a, reactant_b, ..
            } => vec![reactant_a, reactant_b],
        }
    }

    pub fn rate(&self) -> f64 {
        match self {
            Reaction::Unimolecular { k, .. } => *k,
            Reaction::Bimolecular { k_a, .. } => *k_a,
        }
    }

    /// A unimolecular reaction with exactly two products.
    pub fn is_dissociation(&self) -> bool {
        matches!(self, Reaction::Unimolecular { products, .. } if products.len() == 2)
    }
}

impl fmt::Display for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lhs = self.reactants().join(" + ");
        let rhs = if self.products().is_empty() {
            "0".to_string()
        } else {
            self.products().join(" + ")
        };
        write!(f, "{lhs} -> {rhs}")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReactionNetwork {
    pub species: Vec<SpeciesSpec>,
    pub reactions: Vec<Reaction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Reflective,
}

/// Axis-aligned box with reflecting walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    #[serde(default)]
    pub boundary: Boundary,
}

impl BoxDomain {
    pub fn new(lower: [f64; 3], upper: [f64; 3]) -> Self {
        Self {
            lower,
            upper,
            boundary: Boundary::Reflective,
        }
    }

    pub fn cube(side: f64) -> Self {
        Self::new([0.0; 3], [side; 3])
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.upper[0] - self.lower[0],
            self.upper[1] - self.lower[1],
            self.upper[2] - self.lower[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|k| 0.5 * (self.lower[k] + self.upper[k]))
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.lower[k] && p[k] <= self.upper[k])
    }

    /// Distance from `p` to the nearest wall.
    pub fn wall_distance(&self, p: &[f64; 3]) -> f64 {
        (0..3)
            .map(|k| (p[k] - self.lower[k]).min(self.upper[k] - p[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Specular reflection per axis, repeated until the point lies inside.
    pub fn reflect(&self, mut p: [f64; 3]) -> [f64; 3] {
        for k in 0..3 {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            let len = hi - lo;
            let mut x = p[k];
            if x < lo || x > hi {
                // fold onto a period of length 2*len
                let mut y = (x - lo).rem_euclid(2.0 * len);
                if y > len {
                    y = 2.0 * len - y;
                }
                x = lo + y;
            }
            p[k] = x;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Meso,
    Micro,
    #[default]
    Hybrid,
    BdOracle,
}

impl std::str::FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "meso" => Ok(Self::Meso),
            "micro" => Ok(Self::Micro),
            "hybrid" => Ok(Self::Hybrid),
            "bd-oracle" | "bd" => Ok(Self::BdOracle),
            other => Err(format!("unknown solver '{other}'")),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Meso => "meso",
            Self::Micro => "micro",
            Self::Hybrid => "hybrid",
            Self::BdOracle => "bd-oracle",
        })
    }
}

fn default_k_factor() -> f64 {
    6.0
}
fn default_epsilon() -> f64 {
    0.025
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_final: f64,
    pub dt_split: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(rename = "K", default = "default_k_factor")]
    pub k_factor: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub sample_times: Vec<f64>,
    #[serde(default)]
    pub solver: SolverKind,
    /// Voxel counts per axis; the box extents must be integer multiples of h.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxels: Option<[usize; 3]>,
    /// Overrides the computed t_m for every aged species.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_m: Option<f64>,
}

impl SimConfig {
    pub fn new(t_final: f64, dt_split: f64) -> Self {
        Self {
            t_final,
            dt_split,
            epsilon: default_epsilon(),
            k_factor: default_k_factor(),
            rng_seed: 0,
            sample_times: vec![0.0, t_final],
            solver: SolverKind::Hybrid,
            voxels: None,
            t_m: None,
        }
    }

    /// `n` uniformly spaced sample times including both endpoints.
    pub fn uniform_samples(mut self, n: usize) -> Self {
        let n = n.max(2);
        self.sample_times = (0..n).map(|i| self.t_final * i as f64 / (n - 1) as f64).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub domain: BoxDomain,
    pub species: Vec<SpeciesSpec>,
    pub reactions: Vec<Reaction>,
    pub config: SimConfig,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParam(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    pub fn network(&self) -> ReactionNetwork {
        ReactionNetwork {
            species: self.species.clone(),
            reactions: self.reactions.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Invalid(self.violations))
        }
    }
}

pub fn validate_model(network: &ReactionNetwork, domain: &BoxDomain, config: &SimConfig) -> ValidationReport {
    let mut v = Vec::new();

    let extent = domain.extent();
    if extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        v.push(format!("domain extent {extent:?} must be strictly positive"));
    }

    let mut names: HashMap<&str, &SpeciesSpec> = HashMap::new();
    for s in &network.species {
        if names.insert(s.name.as_str(), s).is_some() {
            v.push(format!("species name '{}' is declared twice", s.name));
        }
        if !(s.diffusion >= 0.0 && s.diffusion.is_finite()) {
            v.push(format!("species '{}': D = {} must be >= 0", s.name, s.diffusion));
        }
        if !(s.sigma > 0.0 && s.sigma.is_finite()) {
            v.push(format!("species '{}': sigma = {} must be > 0", s.name, s.sigma));
        }
        if let Placement::FixedPoint(p) = s.initial_placement {
            if !domain.contains(&p) {
                v.push(format!("species '{}': fixed point {p:?} outside the domain", s.name));
            }
        }
    }

    let half_extent = extent.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
    for r in &network.reactions {
        let mut known = true;
        for name in r.reactants().into_iter().chain(r.products().iter().map(|s| s.as_str())) {
            if !names.contains_key(name) {
                v.push(format!("reaction '{r}' references undeclared species '{name}'"));
                known = false;
            }
        }
        if !(r.rate() > 0.0 && r.rate().is_finite()) {
            v.push(format!("reaction '{r}': rate {} must be > 0", r.rate()));
        }
        if r.products().len() > 2 {
            v.push(format!("reaction '{r}' has more than two products"));
        }
        if let (
            Reaction::Bimolecular {
                reactant_a, reactant_b, ..
            },
            true,
        ) = (r, known)
        {
            let (a, b) = (names[reactant_a.as_str()], names[reactant_b.as_str()]);
            if a.sigma + b.sigma > half_extent {
                v.push(format!(
                    "reaction '{r}': sigma sum {} exceeds half the domain extent",
                    a.sigma + b.sigma
                ));
            }
            if a.diffusion + b.diffusion <= 0.0 {
                v.push(format!("reaction '{r}': both reactants are immobile"));
            }
        }
    }

    if !(config.t_final > 0.0) {
        v.push(format!("t_final = {} must be > 0", config.t_final));
    }
    if !(config.dt_split > 0.0 && config.dt_split <= config.t_final) {
        v.push(format!("dt_split = {} must lie in (0, t_final]", config.dt_split));
    }
    if !(config.epsilon > 0.0) {
        v.push(format!("epsilon = {} must be > 0", config.epsilon));
    }
    if !(config.k_factor >= 1.0) {
        v.push(format!("K = {} must be >= 1", config.k_factor));
    }
    if config.sample_times.iter().any(|&t| !(t >= 0.0 && t <= config.t_final)) {
        v.push("sample_times must lie within [0, t_final]".into());
    }
    if config.sample_times.windows(2).any(|w| w[1] < w[0]) {
        v.push("sample_times must be non-decreasing".into());
    }
    if let Some(tm) = config.t_m {
        if !(tm > 0.0) {
            v.push(format!("t_m override {tm} must be > 0"));
        }
    }
    if let Some(n) = config.voxels {
        if let Err(e) = crate::mesh::CartesianMesh::new(domain, n) {
            v.push(e.to_string());
        }
    }

    ValidationReport { violations: v }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReactionKind {
    Uni {
        reactant: SpeciesId,
        products: Vec<SpeciesId>,
        k: f64,
    },
    Bi {
        a: SpeciesId,
        b: SpeciesId,
        products: Vec<SpeciesId>,
        k_a: f64,
    },
}

impl ReactionKind {
    pub fn rate(&self) -> f64 {
        match *self {
            ReactionKind::Uni { k, .. } => k,
            ReactionKind::Bi { k_a, .. } => k_a,
        }
    }
}

/// A validated network with names resolved to indices.
#[derive(Debug, Clone)]
pub struct Model {
    pub species: Vec<SpeciesSpec>,
    pub reactions: Vec<Reaction>,
    pub kinds: Vec<ReactionKind>,
    uni_by_species: Vec<Vec<ReactionId>>,
    uni_total: Vec<f64>,
    bi_by_pair: Vec<Vec<ReactionId>>,
}

impl Model {
    pub fn compile(network: &ReactionNetwork) -> Result<Self> {
        let index: HashMap<&str, SpeciesId> = network
            .species
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.as_str(), i))
            .collect();
        let mut errors = Vec::new();
        let mut lookup = |name: &str| -> SpeciesId {
            *index.get(name).unwrap_or_else(|| {
                errors.push(format!("undeclared species '{name}'"));
                &usize::MAX
            })
        };
        let mut kinds = Vec::with_capacity(network.reactions.len());
        for r in &network.reactions {
            kinds.push(match r {
                Reaction::Unimolecular { reactant, products, k } => ReactionKind::Uni {
                    reactant: lookup(reactant),
                    products: products.iter().map(|p| lookup(p)).collect(),
                    k: *k,
                },
                Reaction::Bimolecular {
                    reactant_a,
                    reactant_b,
                    products,
                    k_a,
                } => ReactionKind::Bi {
                    a: lookup(reactant_a),
                    b: lookup(reactant_b),
                    products: products.iter().map(|p| lookup(p)).collect(),
                    k_a: *k_a,
                },
            });
        }
        if !errors.is_empty() {
            return Err(Error::Invalid(errors));
        }

        let n = network.species.len();
        let mut uni_by_species = vec![Vec::new(); n];
        let mut uni_total = vec![0.0; n];
        let mut bi_by_pair = vec![Vec::new(); n * n];
        for (rid, kind) in kinds.iter().enumerate() {
            match *kind {
                ReactionKind::Uni { reactant, k, .. } => {
                    uni_by_species[reactant].push(rid);
                    uni_total[reactant] += k;
                }
                ReactionKind::Bi { a, b, .. } => {
                    bi_by_pair[a * n + b].push(rid);
                    if a != b {
                        bi_by_pair[b * n + a].push(rid);
                    }
                }
            }
        }
        Ok(Self {
            species: network.species.clone(),
            reactions: network.reactions.clone(),
            kinds,
            uni_by_species,
            uni_total,
            bi_by_pair,
        })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species_id(&self, name: &str) -> Option<SpeciesId> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn diffusion(&self, s: SpeciesId) -> f64 {
        self.species[s].diffusion
    }

    pub fn sigma(&self, s: SpeciesId) -> f64 {
        self.species[s].sigma
    }

    pub fn unimolecular(&self, s: SpeciesId) -> &[ReactionId] {
        &self.uni_by_species[s]
    }

    pub fn unimolecular_rate(&self, s: SpeciesId) -> f64 {
        self.uni_total[s]
    }

    /// Bimolecular channels between species `a` and `b` (order-insensitive).
    pub fn channels(&self, a: SpeciesId, b: SpeciesId) -> &[ReactionId] {
        &self.bi_by_pair[a * self.species.len() + b]
    }

    pub fn reactive(&self, a: SpeciesId, b: SpeciesId) -> bool {
        !self.channels(a, b).is_empty()
    }

    /// Species that take part in at least one bimolecular channel.
    pub fn bimolecular_species(&self) -> BTreeSet<SpeciesId> {
        self.kinds
            .iter()
            .filter_map(|k| match k {
                ReactionKind::Bi { a, b, .. } => Some([*a, *b]),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn products(&self, rid: ReactionId) -> &[SpeciesId] {
        match &self.kinds[rid] {
            ReactionKind::Uni { products, .. } | ReactionKind::Bi { products, .. } => products,
        }
    }

    pub fn initial_counts(&self) -> Vec<i64> {
        self.species.iter().map(|s| s.initial_count as i64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_species() -> (ReactionNetwork, BoxDomain, SimConfig) {
        let net = ReactionNetwork {
            species: vec![
                SpeciesSpec::new("A", 1.0, 0.0025).with_count(10),
                SpeciesSpec::new("B", 1.0, 0.0025).with_count(10),
                SpeciesSpec::new("C", 1.0, 0.0025),
            ],
            reactions: vec![
                Reaction::bi("A", "B", &["C"], 0.1),
                Reaction::uni("C", &["A", "B"], 1.0),
            ],
        };
        (net, BoxDomain::cube(1.0), SimConfig::new(1.0, 0.01))
    }

    #[test]
    fn well_formed_model_has_empty_report() {
        let (net, dom, cfg) = three_species();
        assert!(validate_model(&net, &dom, &cfg).is_ok());
    }

    #[test]
    fn undeclared_species_is_named() {
        let (mut net, dom, cfg) = three_species();
        net.reactions.push(Reaction::uni("X", &[], 1.0));
        let rep = validate_model(&net, &dom, &cfg);
        assert_eq!(rep.violations.len(), 1);
        assert!(rep.violations[0].contains("'X'"));
    }

    #[test]
    fn zero_sigma_is_one_violation() {
        let (mut net, dom, cfg) = three_species();
        net.species[2].sigma = 0.0;
        let rep = validate_model(&net, &dom, &cfg);
        assert_eq!(rep.violations.len(), 1, "{:?}", rep.violations);
        assert!(rep.violations[0].contains("sigma"));
    }

    #[test]
    fn three_products_rejected() {
        let (mut net, dom, cfg) = three_species();
        net.reactions.push(Reaction::uni("C", &["A", "B", "C"], 1.0));
        assert!(!validate_model(&net, &dom, &cfg).is_ok());
    }

    #[test]
    fn config_invariants() {
        let (net, dom, mut cfg) = three_species();
        cfg.dt_split = 2.0;
        cfg.k_factor = 0.5;
        cfg.sample_times = vec![0.5, 0.2, 3.0];
        let rep = validate_model(&net, &dom, &cfg);
        assert_eq!(rep.violations.len(), 4, "{:?}", rep.violations);
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "{\n  \"domain\": {\"lower\": [0,0,0], \"upper\": [1,1,1]},\n  \"species\": [ oops ]\n}";
        match ModelFile::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn compile_builds_symmetric_channels() {
        let (net, _, _) = three_species();
        let m = Model::compile(&net).unwrap();
        assert_eq!(m.channels(0, 1), &[0]);
        assert_eq!(m.channels(1, 0), &[0]);
        assert!(m.channels(0, 0).is_empty());
        assert_eq!(m.unimolecular_rate(2), 1.0);
        assert!(m.reactions[1].is_dissociation());
    }

    #[test]
    fn reflect_mirror_law() {
        let dom = BoxDomain::cube(1.0);
        let p = dom.reflect([1.1, -0.2, 0.5]);
        assert!((p[0] - 0.9).abs() < 1e-12);
        assert!((p[1] - 0.2).abs() < 1e-12);
        assert_eq!(p[2], 0.5);
        // multiple folds
        let q = dom.reflect([2.3, 0.0, 1.0]);
        assert!((q[0] - 0.3).abs() < 1e-12);
    }
}
