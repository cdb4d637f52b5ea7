//! Legitimate-execution reference database, bagging, and score-vector
//! aggregation.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{score_only, ScoringScheme};
use crate::trace::{Alphabet, BootSequence, Label, SequenceFile};
use crate::{Error, Result};

/// Default per-app capacity of the reference store.
pub const DEFAULT_CAPACITY: usize = 150;

/// Default number of bags.
pub const DEFAULT_BAG_COUNT: usize = 25;

/// Default bag size. Must satisfy `2 / 2^n < I` for the default
/// confidence interval, otherwise the exact Wilcoxon branch can never
/// reject; 15 leaves headroom below I = 0.001.
pub const DEFAULT_BAG_SIZE: usize = 15;

/// Default cap on exhaustive-mode combinations.
pub const DEFAULT_EXHAUSTIVE_CAP: u64 = 5000;

/// A collection of alignment scores; the analysis-to-decision metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub sorted: bool,
}

impl ScoreVector {
    pub fn unsorted(values: Vec<f64>) -> ScoreVector {
        ScoreVector {
            values,
            sorted: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Ascending copy, marked sorted.
    pub fn sorted(&self) -> ScoreVector {
        let mut values = self.values.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ScoreVector {
            values,
            sorted: true,
        }
    }
}

/// How reference subsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BagMode {
    /// `m` subsets of size `n`, uniformly with replacement.
    Bootstrap,
    /// All size-`n` combinations; gated by the combination cap.
    Exhaustive,
}

/// Bagging configuration; the seed makes every draw reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaggingPlan {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub mode: BagMode,
    pub exhaustive_cap: u64,
}

impl Default for BaggingPlan {
    fn default() -> Self {
        BaggingPlan {
            m: DEFAULT_BAG_COUNT,
            n: DEFAULT_BAG_SIZE,
            seed: 0,
            mode: BagMode::Bootstrap,
            exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP,
        }
    }
}

impl BaggingPlan {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidPlan("m and n must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which peers a bag member is scored against when building the
/// baseline vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Leave-one-out within each bag (default).
    #[default]
    PerBag,
    /// Each bag member is scored against every other store member.
    WholeStore,
}

/// One stored reference sequence.
#[derive(Debug, Clone)]
pub struct StoredSequence {
    pub sequence: BootSequence,
    /// Logical insertion timestamp; strictly increasing per store.
    pub inserted_at: u64,
    /// Backing file name, when the store is disk-backed.
    pub file_name: Option<String>,
}

/// Capacity-bounded, per-app collection of verified legitimate boot
/// sequences. Eviction is strictly oldest-first.
#[derive(Debug, Clone)]
pub struct ReferenceStore {
    capacity: usize,
    apps: BTreeMap<String, Vec<StoredSequence>>,
    clock: u64,
}

impl ReferenceStore {
    pub fn new(capacity: usize) -> ReferenceStore {
        ReferenceStore {
            capacity,
            apps: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn app_ids(&self) -> impl Iterator<Item = &str> {
        self.apps.keys().map(|s| s.as_str())
    }

    pub fn len(&self, app_id: &str) -> usize {
        self.apps.get(app_id).map_or(0, |v| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.apps.values().all(|v| v.is_empty())
    }

    pub fn entries(&self, app_id: &str) -> Result<&[StoredSequence]> {
        self.apps
            .get(app_id)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownApp(app_id.to_string()))
    }

    pub fn sequences(&self, app_id: &str) -> Result<Vec<&BootSequence>> {
        Ok(self.entries(app_id)?.iter().map(|e| &e.sequence).collect())
    }

    /// Admit a verified legitimate sequence, evicting the oldest entry
    /// when the app is at capacity. Returns the evicted entry, if any.
    pub fn insert(
        &mut self,
        app_id: &str,
        sequence: BootSequence,
        verified: bool,
    ) -> Result<Option<StoredSequence>> {
        if sequence.label != Label::Legitimate || !verified {
            return Err(Error::StoreAdmission(if verified {
                sequence.label.to_string()
            } else {
                format!("{} unverified", sequence.label)
            }));
        }
        self.clock += 1;
        let entry = StoredSequence {
            sequence,
            inserted_at: self.clock,
            file_name: None,
        };
        let bucket = self.apps.entry(app_id.to_string()).or_default();
        bucket.push(entry);
        if bucket.len() > self.capacity {
            Ok(Some(bucket.remove(0)))
        } else {
            Ok(None)
        }
    }

    /// Load a disk-backed store: one directory per app, sequence files in
    /// the order listed by each directory's `manifest.json`. Sequences
    /// are encoded over `alphabet` and preprocessed to `max_len`.
    pub fn load(dir: &Path, alphabet: &Alphabet, max_len: usize) -> Result<ReferenceStore> {
        let mut capacity = DEFAULT_CAPACITY;
        let mut apps = BTreeMap::new();
        let mut clock = 0u64;
        let mut app_dirs: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .collect();
        app_dirs.sort_by_key(|e| e.file_name());
        for entry in app_dirs {
            let app_id = entry.file_name().to_string_lossy().to_string();
            let manifest = Manifest::read_from(&entry.path().join("manifest.json"))?;
            capacity = manifest.capacity;
            let mut bucket = Vec::with_capacity(manifest.entries.len());
            for file_name in &manifest.entries {
                let seq_file = SequenceFile::read_from(&entry.path().join(file_name))?;
                let (raw, _) = seq_file.encode(alphabet);
                let sequence = crate::trace::preprocess(&raw, max_len)?;
                clock += 1;
                bucket.push(StoredSequence {
                    sequence,
                    inserted_at: clock,
                    file_name: Some(file_name.clone()),
                });
            }
            apps.insert(app_id, bucket);
        }
        Ok(ReferenceStore {
            capacity,
            apps,
            clock,
        })
    }
}

/// Per-app manifest: the single source of ordering truth for a
/// disk-backed store directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub capacity: usize,
    pub entries: Vec<String>,
}

impl Manifest {
    pub fn read_from(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::MalformedManifest {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Draw reference subsets for one app, as index lists into the store
/// order.
pub fn bag_reference_sets(
    store: &ReferenceStore,
    app_id: &str,
    plan: &BaggingPlan,
) -> Result<Vec<Vec<usize>>> {
    let size = store.entries(app_id)?.len();
    bag_indices(size, plan)
}

/// Subset drawing over an abstract pool of `size` references.
pub fn bag_indices(size: usize, plan: &BaggingPlan) -> Result<Vec<Vec<usize>>> {
    plan.validate()?;
    if size == 0 {
        return Err(Error::TooFewSamples {
            context: "bagging".into(),
            required: 1,
            available: 0,
        });
    }
    match plan.mode {
        BagMode::Bootstrap => {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            Ok((0..plan.m)
                .map(|_| (0..plan.n).map(|_| rng.gen_range(0..size)).collect())
                .collect())
        }
        BagMode::Exhaustive => {
            let count = combinations(size as u64, plan.n as u64);
            if count > plan.exhaustive_cap {
                return Err(Error::ExhaustiveCapExceeded {
                    combinations: count,
                    cap: plan.exhaustive_cap,
                });
            }
            if count == 0 {
                return Err(Error::TooFewSamples {
                    context: "exhaustive bagging".into(),
                    required: plan.n,
                    available: size,
                });
            }
            Ok(enumerate_combinations(size, plan.n))
        }
    }
}

fn combinations(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result = 1u64;
    for i in 0..k {
        result = result.saturating_mul(n - i) / (i + 1);
    }
    result
}

fn enumerate_combinations(size: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    fn recurse(start: usize, size: usize, n: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for i in start..size {
            current.push(i);
            recurse(i + 1, size, n, current, out);
            current.pop();
        }
    }
    recurse(0, size, n, &mut current, &mut out);
    out
}

/// Score a test sequence against every member of one reference subset.
pub fn score_vector(
    test: &BootSequence,
    subset: &[&BootSequence],
    scheme: &ScoringScheme,
) -> Result<ScoreVector> {
    if subset.is_empty() {
        return Err(Error::EmptyInput("reference subset".into()));
    }
    let values = subset
        .iter()
        .map(|r| score_only(test, r, scheme).map(|s| s as f64))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScoreVector::unsorted(values))
}

/// Sort each per-bag vector ascending and average position-wise.
pub fn aggregate(vectors: &[ScoreVector]) -> Result<ScoreVector> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::EmptyInput("score vectors".into()))?;
    let n = first.len();
    for v in vectors {
        if v.len() != n {
            return Err(Error::VectorLengthMismatch(n, v.len()));
        }
    }
    let sorted: Vec<ScoreVector> = vectors.iter().map(|v| v.sorted()).collect();
    let values = (0..n)
        .map(|j| sorted.iter().map(|v| v.values[j]).sum::<f64>() / vectors.len() as f64)
        .collect();
    Ok(ScoreVector {
        values,
        sorted: true,
    })
}

/// Precomputed per-app detection model: bags drawn from a reference
/// snapshot plus the aggregated leave-one-out baseline vector. Pairwise
/// scores are memoized so repeated bag membership costs one alignment.
pub struct ReferenceModel {
    refs: Vec<BootSequence>,
    bags: Vec<Vec<usize>>,
    baseline: ScoreVector,
    scheme: ScoringScheme,
}

impl ReferenceModel {
    pub fn build(
        refs: Vec<BootSequence>,
        plan: &BaggingPlan,
        scheme: &ScoringScheme,
        baseline_mode: BaselineMode,
    ) -> Result<ReferenceModel> {
        let bags = bag_indices(refs.len(), plan)?;
        let baseline = baseline_from_refs(&refs, &bags, scheme, baseline_mode)?;
        Ok(ReferenceModel {
            refs,
            bags,
            baseline,
            scheme: *scheme,
        })
    }

    pub fn bags(&self) -> &[Vec<usize>] {
        &self.bags
    }

    pub fn baseline(&self) -> &ScoreVector {
        &self.baseline
    }

    pub fn references(&self) -> &[BootSequence] {
        &self.refs
    }

    /// Aggregated score vector of one test sequence against all bags.
    pub fn test_vector(&self, test: &BootSequence) -> Result<ScoreVector> {
        let mut memo: HashMap<usize, f64> = HashMap::new();
        let mut vectors = Vec::with_capacity(self.bags.len());
        for bag in &self.bags {
            let mut values = Vec::with_capacity(bag.len());
            for &idx in bag {
                let score = match memo.get(&idx) {
                    Some(&s) => s,
                    None => {
                        let s = score_only(test, &self.refs[idx], &self.scheme)? as f64;
                        memo.insert(idx, s);
                        s
                    }
                };
                values.push(score);
            }
            vectors.push(ScoreVector::unsorted(values));
        }
        aggregate(&vectors)
    }
}

/// Baseline vector: each bag member is scored leave-one-out against its
/// peers (within the bag, or across the whole snapshot), per-member means
/// are taken, and the per-bag vectors are aggregated like test vectors.
pub fn baseline_from_refs(
    refs: &[BootSequence],
    bags: &[Vec<usize>],
    scheme: &ScoringScheme,
    mode: BaselineMode,
) -> Result<ScoreVector> {
    let mut memo: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pair_score = |a: usize, b: usize| -> Result<f64> {
        if let Some(&s) = memo.get(&(a, b)) {
            return Ok(s);
        }
        let s = score_only(&refs[a], &refs[b], scheme)? as f64;
        memo.insert((a, b), s);
        Ok(s)
    };
    let mut vectors = Vec::with_capacity(bags.len());
    for bag in bags {
        let mut values = Vec::with_capacity(bag.len());
        for &member in bag {
            // Leave-one-out is by reference identity: bootstrap bags can
            // draw the same reference twice, and scoring a member against
            // its own duplicate would leak perfect self-similarity into
            // the baseline.
            let peers: Vec<usize> = match mode {
                BaselineMode::PerBag => {
                    bag.iter().copied().filter(|&i| i != member).collect()
                }
                BaselineMode::WholeStore => {
                    (0..refs.len()).filter(|&i| i != member).collect()
                }
            };
            if peers.is_empty() {
                return Err(Error::BagTooSmall(1));
            }
            let mut sum = 0.0;
            for &peer in &peers {
                sum += pair_score(member, peer)?;
            }
            values.push(sum / peers.len() as f64);
        }
        vectors.push(ScoreVector::unsorted(values));
    }
    aggregate(&vectors)
}

/// Baseline built directly from explicit sequence subsets, for callers
/// that manage their own bagging.
pub fn reference_baseline(
    subsets: &[Vec<&BootSequence>],
    scheme: &ScoringScheme,
) -> Result<ScoreVector> {
    for subset in subsets {
        if subset.len() < 2 {
            return Err(Error::BagTooSmall(subset.len()));
        }
    }
    let mut vectors = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let mut values = Vec::with_capacity(subset.len());
        for (i, member) in subset.iter().enumerate() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (j, peer) in subset.iter().enumerate() {
                if i != j {
                    sum += score_only(member, peer, scheme)? as f64;
                    count += 1;
                }
            }
            values.push(sum / count as f64);
        }
        vectors.push(ScoreVector::unsorted(values));
    }
    aggregate(&vectors)
}
