//! Automatic scale assignment.
//!
//! Bimolecular reactions whose mesoscopic binding time is under-resolved
//! (`W > epsilon`) are traced back through unimolecular producers to the
//! dissociation that created both reactants. That dissociating species is
//! kept microscopic, and every species on the traced chains stays
//! microscopic until it reaches age `t_m`.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::mesh::CartesianMesh;
use crate::model::{Model, ReactionId, ReactionKind, SpeciesId};
use crate::rates::{self, Dim};

/// Scale assignment for one species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalePolicy {
    AlwaysMeso,
    /// Microscopic while younger than the given age, mesoscopic afterwards.
    MicroUntilAge(f64),
    AlwaysMicro,
}

impl ScalePolicy {
    /// Scale of a particle of age `age` under this policy.
    pub fn is_micro(&self, age: f64) -> bool {
        match *self {
            ScalePolicy::AlwaysMeso => false,
            ScalePolicy::MicroUntilAge(t_m) => age <= t_m,
            ScalePolicy::AlwaysMicro => true,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            ScalePolicy::AlwaysMeso => 0,
            ScalePolicy::MicroUntilAge(_) => 1,
            ScalePolicy::AlwaysMicro => 2,
        }
    }

    /// Combine two assignments, keeping the more microscopic one (and the
    /// longer residency age on ties).
    fn merge(self, other: ScalePolicy) -> ScalePolicy {
        match (self, other) {
            (ScalePolicy::MicroUntilAge(a), ScalePolicy::MicroUntilAge(b)) => ScalePolicy::MicroUntilAge(a.max(b)),
            _ if other.rank() > self.rank() => other,
            _ => self,
        }
    }
}

impl fmt::Display for ScalePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalePolicy::AlwaysMeso => write!(f, "always-meso"),
            ScalePolicy::MicroUntilAge(t) => write!(f, "micro-until-age({t:.6e})"),
            ScalePolicy::AlwaysMicro => write!(f, "always-micro"),
        }
    }
}

/// Resolution report for one bimolecular reaction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionResolution {
    pub reaction: ReactionId,
    pub k_a: f64,
    pub sigma: f64,
    pub d: f64,
    pub h: f64,
    pub h_star: f64,
    /// `None` when no positive mesoscopic rate exists on this mesh.
    pub k_meso: Option<f64>,
    pub w: f64,
    pub resolved: bool,
}

/// Result of a backward search from one bimolecular reaction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OriginTrace {
    pub reaction: ReactionId,
    /// Dissociating species that co-produce both reactants.
    pub origins: BTreeSet<SpeciesId>,
    /// Species visited on the producer chains (reactant pairs examined).
    pub chain: BTreeSet<SpeciesId>,
    /// For each origin, the summed diffusion constant of the products of
    /// the dissociation that starts the chain.
    pub product_diffusion: BTreeMap<SpeciesId, f64>,
    /// Number of distinct species pairs examined.
    pub visited: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub policies: Vec<ScalePolicy>,
    pub reactions: Vec<ReactionResolution>,
    pub traces: Vec<OriginTrace>,
}

impl SplitPlan {
    /// Everything on the mesoscale.
    pub fn all_meso(n_species: usize) -> Self {
        Self {
            policies: vec![ScalePolicy::AlwaysMeso; n_species],
            reactions: Vec::new(),
            traces: Vec::new(),
        }
    }

    /// Everything on the microscale.
    pub fn all_micro(n_species: usize) -> Self {
        Self {
            policies: vec![ScalePolicy::AlwaysMicro; n_species],
            reactions: Vec::new(),
            traces: Vec::new(),
        }
    }

    pub fn policy(&self, s: SpeciesId) -> ScalePolicy {
        self.policies[s]
    }

    pub fn micro_species(&self) -> Vec<SpeciesId> {
        (0..self.policies.len())
            .filter(|&s| self.policies[s] != ScalePolicy::AlwaysMeso)
            .collect()
    }

    pub fn flagged(&self) -> impl Iterator<Item = &ReactionResolution> {
        self.reactions.iter().filter(|r| !r.resolved)
    }
}

/// Options for [`build_split`].
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOptions {
    pub epsilon: f64,
    pub k_factor: f64,
    /// Replaces the computed residency age for every chain species.
    pub t_m: Option<f64>,
    /// Accept under-resolved reactions with no dissociation source on the mesoscale.
    pub force_meso: bool,
    /// Species forced to be always microscopic.
    pub force_micro: Vec<SpeciesId>,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.025,
            k_factor: 6.0,
            t_m: None,
            force_meso: false,
            force_micro: Vec::new(),
        }
    }
}

/// Minimum microscale residency age `K^2 V_vox^(2/3) / (6 D)`.
pub fn t_m(voxel_volume: f64, d: f64, k_factor: f64) -> f64 {
    k_factor * k_factor * voxel_volume.powf(2.0 / 3.0) / (6.0 * d)
}

/// Resolution of every bimolecular reaction on `mesh`.
pub fn reaction_resolutions(model: &Model, mesh: &CartesianMesh, epsilon: f64) -> Vec<ReactionResolution> {
    let h = mesh.h;
    model
        .kinds
        .iter()
        .enumerate()
        .filter_map(|(rid, kind)| match *kind {
            ReactionKind::Bi { a, b, k_a, .. } => {
                let d = model.diffusion(a) + model.diffusion(b);
                let sigma = model.sigma(a) + model.sigma(b);
                let w = rates::resolution_error_w(k_a, d, sigma, h).w;
                Some(ReactionResolution {
                    reaction: rid,
                    k_a,
                    sigma,
                    d,
                    h,
                    h_star: rates::h_star(sigma, Dim::Three),
                    k_meso: rates::meso_rate(k_a, d, sigma, h).ok().map(|m| m.k_meso),
                    w,
                    resolved: w <= epsilon,
                })
            }
            ReactionKind::Uni { .. } => None,
        })
        .collect()
}

/// Bimolecular reactions with `W > epsilon`.
pub fn flag_reactions(model: &Model, mesh: &CartesianMesh, epsilon: f64) -> Vec<(ReactionId, f64)> {
    reaction_resolutions(model, mesh, epsilon)
        .into_iter()
        .filter(|r| !r.resolved)
        .map(|r| (r.reaction, r.w))
        .collect()
}

fn unordered(a: SpeciesId, b: SpeciesId) -> (SpeciesId, SpeciesId) {
    (a.min(b), a.max(b))
}

/// Whether the multiset of `products` equals `{a, b}`.
fn produces_pair(products: &[SpeciesId], a: SpeciesId, b: SpeciesId) -> bool {
    products.len() == 2 && unordered(products[0], products[1]) == unordered(a, b)
}

/// Breadth-first backward search from the reactants of `reaction` through
/// unimolecular producers, collecting every dissociating species that
/// produces both (transformed) reactants at once.
pub fn trace_origins(model: &Model, reaction: ReactionId) -> OriginTrace {
    let ReactionKind::Bi { a, b, .. } = model.kinds[reaction] else {
        return OriginTrace {
            reaction,
            ..Default::default()
        };
    };
    let mut trace = OriginTrace {
        reaction,
        ..Default::default()
    };
    let mut seen: HashSet<(SpeciesId, SpeciesId)> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(unordered(a, b));
    queue.push_back(unordered(a, b));

    while let Some((x, y)) = queue.pop_front() {
        trace.chain.insert(x);
        trace.chain.insert(y);

        let mut direct = false;
        for kind in &model.kinds {
            if let ReactionKind::Uni { reactant, products, .. } = kind {
                if produces_pair(products, x, y) {
                    direct = true;
                    trace.origins.insert(*reactant);
                    let d = model.diffusion(x) + model.diffusion(y);
                    let e = trace.product_diffusion.entry(*reactant).or_insert(d);
                    *e = e.min(d);
                }
            }
        }
        if direct {
            continue;
        }

        // Replace one member of the pair by a unimolecular producer of it.
        for (target, other) in [(x, y), (y, x)] {
            for kind in &model.kinds {
                if let ReactionKind::Uni { reactant, products, .. } = kind {
                    if products.contains(&target) {
                        let next = unordered(*reactant, other);
                        if seen.insert(next) {
                            queue.push_back(next);
                        }
                    }
                }
            }
        }
    }
    trace.visited = seen.len();
    trace
}

/// Assign a scale policy to every species.
pub fn build_split(model: &Model, mesh: &CartesianMesh, opts: &PartitionOptions) -> Result<SplitPlan> {
    let reactions = reaction_resolutions(model, mesh, opts.epsilon);
    let mut policies = vec![ScalePolicy::AlwaysMeso; model.n_species()];
    let mut traces = Vec::new();
    let forced: BTreeSet<SpeciesId> = opts.force_micro.iter().copied().collect();

    for res in reactions.iter().filter(|r| !r.resolved) {
        let trace = trace_origins(model, res.reaction);
        if trace.origins.is_empty() {
            let ReactionKind::Bi { a, b, .. } = model.kinds[res.reaction] else {
                unreachable!("resolutions only cover bimolecular reactions")
            };
            if !(opts.force_meso || forced.contains(&a) || forced.contains(&b)) {
                return Err(Error::UnresolvableReaction {
                    reaction: model.reactions[res.reaction].to_string(),
                    w: res.w,
                });
            }
        }
        let residency = trace
            .product_diffusion
            .values()
            .map(|&d| opts.t_m.unwrap_or_else(|| t_m(mesh.voxel_volume(), d, opts.k_factor)))
            .fold(0.0, f64::max);
        for &s in &trace.chain {
            policies[s] = policies[s].merge(ScalePolicy::MicroUntilAge(residency));
        }
        for &s in &trace.origins {
            policies[s] = policies[s].merge(ScalePolicy::AlwaysMicro);
        }
        traces.push(trace);
    }
    for &s in &forced {
        policies[s] = ScalePolicy::AlwaysMicro;
    }
    // a chain with zero residency is mesoscopic
    for p in &mut policies {
        if matches!(p, ScalePolicy::MicroUntilAge(t) if *t <= 0.0) {
            *p = ScalePolicy::AlwaysMeso;
        }
    }

    Ok(SplitPlan {
        policies,
        reactions,
        traces,
    })
}
