//! Seeded generation of random knowledge bases and labeled datasets.
//!
//! Every instance draws from its own generator seeded from `(seed, index)`,
//! so an instance's content does not depend on how many were drawn before it.

mod io;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::logic::{Atom, Connective, Formula, KnowledgeBase, Literal};
use crate::measures::{measure_kb, MeasureError};

pub use io::{load_dataset, load_dataset_verified, save_dataset, DatasetError};

/// Consecutive duplicate draws after which `generate_kb` settles for fewer
/// formulas.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub atom_pool: usize,
    pub max_formulas: usize,
    #[serde(default = "default_max_literals")]
    pub max_literal_occurrences: usize,
    pub n_instances: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_literals() -> usize {
    10
}

impl GenConfig {
    pub fn new(atom_pool: usize, max_formulas: usize, n_instances: usize, seed: u64) -> Self {
        GenConfig { atom_pool, max_formulas, max_literal_occurrences: default_max_literals(), n_instances, seed }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.atom_pool == 0 || self.max_formulas == 0 || self.max_literal_occurrences == 0 {
            return Err(format!("generator counts must be positive: {self:?}"));
        }
        Ok(())
    }

    /// The nine atom/formula settings {3,6,9} x {5,10,15}.
    pub fn paper_grid(n_instances: usize, seed: u64) -> Vec<GenConfig> {
        let mut out = Vec::new();
        for max_formulas in [5, 10, 15] {
            for atoms in [3, 6, 9] {
                out.push(GenConfig::new(atoms, max_formulas, n_instances, seed));
            }
        }
        out
    }

    pub fn atoms(&self) -> Vec<Atom> {
        atom_pool(self.atom_pool)
    }
}

/// Atoms `a`, `b`, ... in order; past `z` they continue as `p26`, `p27`, ...
pub fn atom_pool(n: usize) -> Vec<Atom> {
    (0..n)
        .map(|i| {
            let name = if i < 26 { ((b'a' + i as u8) as char).to_string() } else { format!("p{i}") };
            Atom::new(name).expect("generated atom names are valid")
        })
        .collect()
}

/// Generator for instance `index` of a dataset seeded with `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index.wrapping_add(0x51_7c_c1_b7))))
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

enum Node {
    Leaf,
    Inner(usize, usize),
}

/// Random formula with between 1 and `max_lits` literal occurrences.
///
/// The literal count is uniform; the tree shape is a uniformly random binary
/// tree over that many leaves (Rémy's algorithm); each inner node is a
/// conjunction or disjunction with equal probability; each leaf is a uniform
/// atom negated with probability 1/2.
pub fn generate_formula<R: Rng + ?Sized>(rng: &mut R, atoms: &[Atom], max_lits: usize) -> Formula {
    assert!(!atoms.is_empty(), "atom pool must not be empty");
    let leaves = rng.gen_range(1..=max_lits.max(1));

    let mut nodes = vec![Node::Leaf];
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut root = 0;
    for _ in 1..leaves {
        let target = rng.gen_range(0..nodes.len());
        let leaf = nodes.len();
        nodes.push(Node::Leaf);
        parent.push(None);
        let inner = nodes.len();
        nodes.push(if rng.gen::<bool>() { Node::Inner(target, leaf) } else { Node::Inner(leaf, target) });
        parent.push(parent[target]);
        match parent[target] {
            None => root = inner,
            Some(p) => {
                if let Node::Inner(l, r) = &mut nodes[p] {
                    if *l == target {
                        *l = inner;
                    } else {
                        *r = inner;
                    }
                }
            }
        }
        parent[target] = Some(inner);
        parent[leaf] = Some(inner);
    }
    build(&nodes, root, rng, atoms)
}

fn build<R: Rng + ?Sized>(nodes: &[Node], at: usize, rng: &mut R, atoms: &[Atom]) -> Formula {
    match nodes[at] {
        Node::Leaf => {
            let atom = atoms[rng.gen_range(0..atoms.len())].clone();
            Formula::lit(Literal { atom, negated: rng.gen() })
        }
        Node::Inner(l, r) => {
            let op = if rng.gen::<bool>() { Connective::And } else { Connective::Or };
            let left = build(nodes, l, rng, atoms);
            let right = build(nodes, r, rng, atoms);
            Formula::join(op, [left, right])
        }
    }
}

/// Random knowledge base with a uniform target size in `1..=max_formulas`.
pub fn generate_kb<R: Rng + ?Sized>(rng: &mut R, config: &GenConfig) -> KnowledgeBase {
    let atoms = config.atoms();
    let target = rng.gen_range(1..=config.max_formulas.max(1));
    let mut kb = KnowledgeBase::new();
    let mut rejections = 0;
    while kb.len() < target && rejections < MAX_CONSECUTIVE_REJECTIONS {
        if kb.insert(generate_formula(rng, &atoms, config.max_literal_occurrences)) {
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    kb
}

/// A knowledge base together with its exact measure values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledInstance {
    pub kb: KnowledgeBase,
    pub label_mi: usize,
    pub label_at: usize,
}

impl LabeledInstance {
    /// Labels `kb` by exact enumeration.
    pub fn new(kb: KnowledgeBase) -> Result<Self, MeasureError> {
        let (label_mi, label_at) = measure_kb(&kb)?;
        Ok(LabeledInstance { kb, label_mi, label_at })
    }

    pub fn label(&self, measure: crate::measures::Measure) -> usize {
        match measure {
            crate::measures::Measure::Mi => self.label_mi,
            crate::measures::Measure::At => self.label_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub config: GenConfig,
    pub instances: Vec<LabeledInstance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// The first `n` instances, with the config's instance count adjusted.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.instances.len());
        Dataset { config: GenConfig { n_instances: n, ..self.config.clone() }, instances: self.instances[..n].to_vec() }
    }
}

/// Unlabeled knowledge bases of a dataset, in index order.
pub fn generate_kbs(config: &GenConfig) -> Vec<KnowledgeBase> {
    (0..config.n_instances).map(|i| generate_kb(&mut instance_rng(config.seed, i as u64), config)).collect()
}

pub fn generate_dataset(config: &GenConfig) -> Result<Dataset, MeasureError> {
    let instances = generate_kbs(config).into_iter().map(LabeledInstance::new).collect::<Result<_, _>>()?;
    Ok(Dataset { config: config.clone(), instances })
}
