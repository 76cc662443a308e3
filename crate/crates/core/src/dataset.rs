//! Interaction data: parsing, degree filtering, per-user splitting, noise
//! injection and a synthetic generator with known latent structure.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::math::round_half_up;
use crate::model::Matrix;
use crate::{rng_from_seed, Error, Result};

/// A set of observed (user, item) interactions stored user-major: each
/// user's items are a sorted, duplicate-free slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionSet {
    num_users: usize,
    num_items: usize,
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl InteractionSet {
    pub fn empty(num_users: usize, num_items: usize) -> Self {
        Self {
            num_users,
            num_items,
            offsets: vec![0; num_users + 1],
            items: Vec::new(),
        }
    }

    /// Builds a set from arbitrary pairs. Duplicates are collapsed; any index
    /// outside `[0, num_users) × [0, num_items)` is an error.
    pub fn from_pairs<I>(num_users: usize, num_items: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); num_users];
        for (u, v) in pairs {
            if u as usize >= num_users || v as usize >= num_items {
                return Err(Error::IndexOutOfRange(format!(
                    "({u}, {v}) outside {num_users} users x {num_items} items"
                )));
            }
            rows[u as usize].push(v);
        }
        Ok(Self::from_rows(num_items, rows))
    }

    fn from_rows(num_items: usize, mut rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut items = Vec::new();
        offsets.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            items.extend_from_slice(row);
            offsets.push(items.len());
        }
        Self {
            num_users: rows.len(),
            num_items,
            offsets,
            items,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Number of interactions.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The sorted items `V_u` of user `u`.
    pub fn user_items(&self, u: u32) -> &[u32] {
        let u = u as usize;
        &self.items[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        (u as usize) < self.num_users && self.user_items(u).binary_search(&v).is_ok()
    }

    /// Position of `(u, v)` in the user-major enumeration order.
    pub fn index_of(&self, u: u32, v: u32) -> Option<usize> {
        if u as usize >= self.num_users {
            return None;
        }
        self.user_items(u)
            .binary_search(&v)
            .ok()
            .map(|p| self.offsets[u as usize] + p)
    }

    /// The interaction at enumeration position `idx`.
    pub fn pair(&self, idx: usize) -> (u32, u32) {
        let u = self.offsets.partition_point(|&o| o <= idx) - 1;
        (u as u32, self.items[idx])
    }

    /// All interactions in user-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_users).flat_map(move |u| {
            self.user_items(u as u32)
                .iter()
                .map(move |&v| (u as u32, v))
        })
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_items];
        for &v in &self.items {
            deg[v as usize] += 1;
        }
        deg
    }

    /// Set union; both operands must share dimensions.
    pub fn union(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Self::from_pairs(
            self.num_users,
            self.num_items,
            self.iter().chain(other.iter()),
        )
    }

    /// Number of pairs present in both sets.
    pub fn intersection_len(&self, other: &Self) -> usize {
        self.iter().filter(|&(u, v)| other.contains(u, v)).count()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.num_users != other.num_users || self.num_items != other.num_items {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.num_users, self.num_items, other.num_users, other.num_items
            )));
        }
        Ok(())
    }
}

/// Raw string ids in dense-index order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMapping {
    pub users: Vec<String>,
    pub items: Vec<String>,
}

impl IdMapping {
    /// Restricts the mapping to the kept dense indices, in their new order.
    pub fn restrict(&self, kept_users: &[u32], kept_items: &[u32]) -> Self {
        Self {
            users: kept_users
                .iter()
                .map(|&u| self.users[u as usize].clone())
                .collect(),
            items: kept_items
                .iter()
                .map(|&v| self.items[v as usize].clone())
                .collect(),
        }
    }
}

#[derive(Default)]
struct Interner {
    index: BTreeMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.names.len() as u32;
        self.index.insert(raw.to_string(), i);
        self.names.push(raw.to_string());
        i
    }
}

/// Parses whitespace-separated `user item` lines. Raw ids are re-indexed
/// densely in first-appearance order; blank lines are skipped.
pub fn parse_interactions(text: &str) -> Result<(InteractionSet, IdMapping)> {
    let mut users = Interner::default();
    let mut items = Interner::default();
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match (tokens.next(), tokens.next(), tokens.next()) {
            (Some(u), Some(v), None) => pairs.push((users.intern(u), items.intern(v))),
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected `user item`, got {line:?}"),
                })
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let set = InteractionSet::from_pairs(users.names.len(), items.names.len(), pairs)?;
    Ok((
        set,
        IdMapping {
            users: users.names,
            items: items.names,
        },
    ))
}

/// Output of [`filter_min_degree`]: the re-indexed set plus, for each new
/// index, the index it had in the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filtered {
    pub set: InteractionSet,
    pub kept_users: Vec<u32>,
    pub kept_items: Vec<u32>,
}

/// Repeatedly drops users and items with fewer than `min_count` interactions
/// until every remaining degree is at least `min_count`, then re-indexes.
/// A threshold of 1 leaves the set untouched.
pub fn filter_min_degree(set: &InteractionSet, min_count: usize) -> Result<Filtered> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    if min_count == 1 {
        return Ok(Filtered {
            set: set.clone(),
            kept_users: (0..set.num_users() as u32).collect(),
            kept_items: (0..set.num_items() as u32).collect(),
        });
    }
    let mut pairs: Vec<(u32, u32)> = set.iter().collect();
    loop {
        let mut udeg = vec![0usize; set.num_users()];
        let mut ideg = vec![0usize; set.num_items()];
        for &(u, v) in &pairs {
            udeg[u as usize] += 1;
            ideg[v as usize] += 1;
        }
        let before = pairs.len();
        pairs.retain(|&(u, v)| udeg[u as usize] >= min_count && ideg[v as usize] >= min_count);
        if pairs.len() == before {
            break;
        }
    }
    if pairs.is_empty() {
        return Err(Error::FilterEliminatedAll);
    }
    let mut user_live = vec![false; set.num_users()];
    let mut item_live = vec![false; set.num_items()];
    for &(u, v) in &pairs {
        user_live[u as usize] = true;
        item_live[v as usize] = true;
    }
    let (kept_users, user_new) = dense_remap(&user_live);
    let (kept_items, item_new) = dense_remap(&item_live);
    let set = InteractionSet::from_pairs(
        kept_users.len(),
        kept_items.len(),
        pairs
            .iter()
            .map(|&(u, v)| (user_new[u as usize], item_new[v as usize])),
    )?;
    Ok(Filtered {
        set,
        kept_users,
        kept_items,
    })
}

fn dense_remap(live: &[bool]) -> (Vec<u32>, Vec<u32>) {
    let mut kept = Vec::new();
    let mut new_index = vec![u32::MAX; live.len()];
    for (old, &alive) in live.iter().enumerate() {
        if alive {
            new_index[old] = kept.len() as u32;
            kept.push(old as u32);
        }
    }
    (kept, new_index)
}

/// Train/validation/test partition of one interaction set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: InteractionSet,
    pub validation: InteractionSet,
    pub test: InteractionSet,
    pub seed: u64,
    /// Users whose train share rounded to zero. They stay in the data but
    /// have nothing to learn from.
    pub users_without_train: Vec<u32>,
}

/// Splits each user's items: `round(train_frac * |V_u|)` go to train (after a
/// seeded shuffle), the rest to test. Then `val_frac_of_train` of the pooled
/// train set moves to validation, sampled globally.
pub fn split(
    set: &InteractionSet,
    train_frac: f64,
    val_frac_of_train: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_frac must be in (0, 1), got {train_frac}"
        )));
    }
    if !(0.0..1.0).contains(&val_frac_of_train) {
        return Err(Error::InvalidArgument(format!(
            "val_frac_of_train must be in [0, 1), got {val_frac_of_train}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut train_pairs = Vec::new();
    let mut test_pairs = Vec::new();
    let mut users_without_train = Vec::new();
    for u in 0..set.num_users() as u32 {
        let mut items = set.user_items(u).to_vec();
        if items.is_empty() {
            continue;
        }
        items.shuffle(&mut rng);
        let n_train = round_half_up(train_frac * items.len() as f64).min(items.len());
        if n_train == 0 {
            users_without_train.push(u);
        }
        train_pairs.extend(items[..n_train].iter().map(|&v| (u, v)));
        test_pairs.extend(items[n_train..].iter().map(|&v| (u, v)));
    }
    let n_val = round_half_up(val_frac_of_train * train_pairs.len() as f64);
    let mut is_val = vec![false; train_pairs.len()];
    for i in index::sample(&mut rng, train_pairs.len(), n_val) {
        is_val[i] = true;
    }
    let (nu, ni) = (set.num_users(), set.num_items());
    let validation = InteractionSet::from_pairs(
        nu,
        ni,
        train_pairs
            .iter()
            .zip(&is_val)
            .filter(|(_, &v)| v)
            .map(|(p, _)| *p),
    )?;
    let train = InteractionSet::from_pairs(
        nu,
        ni,
        train_pairs
            .iter()
            .zip(&is_val)
            .filter(|(_, &v)| !v)
            .map(|(p, _)| *p),
    )?;
    let test = InteractionSet::from_pairs(nu, ni, test_pairs)?;
    Ok(SplitDataset {
        train,
        validation,
        test,
        seed,
        users_without_train,
    })
}

/// Ground-truth flag of a training interaction. Used for evaluation and
/// telemetry only; training never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Normal,
    Noisy,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Noisy => "noisy",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "noisy" => Ok(Label::Noisy),
            other => Err(Error::InvalidArgument(format!("unknown label {other:?}"))),
        }
    }
}

/// A user whose absent-item pool could not supply the requested noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shortfall {
    pub user: u32,
    pub requested: usize,
    pub injected: usize,
}

/// Training interactions with ground-truth noise labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoisyTrainSet {
    base: InteractionSet,
    injected: Vec<(u32, u32)>,
    combined: InteractionSet,
    labels: Vec<Label>,
    shortfall: Vec<Shortfall>,
}

impl NoisyTrainSet {
    /// A training set with no injected noise.
    pub fn clean(train: InteractionSet) -> Self {
        let labels = vec![Label::Normal; train.len()];
        Self {
            base: train.clone(),
            injected: Vec::new(),
            combined: train,
            labels,
            shortfall: Vec::new(),
        }
    }

    fn with_injected(
        train: &InteractionSet,
        mut injected: Vec<(u32, u32)>,
        shortfall: Vec<Shortfall>,
    ) -> Result<Self> {
        injected.sort_unstable();
        let combined = InteractionSet::from_pairs(
            train.num_users(),
            train.num_items(),
            train.iter().chain(injected.iter().copied()),
        )?;
        let labels = combined
            .iter()
            .map(|(u, v)| {
                if train.contains(u, v) {
                    Label::Normal
                } else {
                    Label::Noisy
                }
            })
            .collect();
        Ok(Self {
            base: train.clone(),
            injected,
            combined,
            labels,
            shortfall,
        })
    }

    /// Rebuilds a labeled set from `(user, item, label)` rows, as read back
    /// from a noise-labeled file.
    pub fn from_labeled<I>(num_users: usize, num_items: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32, Label)>,
    {
        let mut normal = Vec::new();
        let mut noisy = Vec::new();
        for (u, v, label) in rows {
            match label {
                Label::Normal => normal.push((u, v)),
                Label::Noisy => noisy.push((u, v)),
            }
        }
        let base = InteractionSet::from_pairs(num_users, num_items, normal)?;
        if noisy.iter().any(|&(u, v)| base.contains(u, v)) {
            return Err(Error::InvalidArgument(
                "pair labeled both normal and noisy".into(),
            ));
        }
        noisy.sort_unstable();
        noisy.dedup();
        Self::with_injected(&base, noisy, Vec::new())
    }

    /// The normal interactions `I_normal`.
    pub fn base(&self) -> &InteractionSet {
        &self.base
    }

    /// The injected pairs `I_noise`, sorted.
    pub fn injected(&self) -> &[(u32, u32)] {
        &self.injected
    }

    /// Everything the model trains on: `I_normal ∪ I_noise`.
    pub fn combined(&self) -> &InteractionSet {
        &self.combined
    }

    /// Labels aligned with the enumeration order of [`Self::combined`].
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label_at(&self, idx: usize) -> Label {
        self.labels[idx]
    }

    pub fn label(&self, u: u32, v: u32) -> Option<Label> {
        self.combined.index_of(u, v).map(|i| self.labels[i])
    }

    pub fn shortfall(&self) -> &[Shortfall] {
        &self.shortfall
    }

    /// Rows `(user, item, label)` in user-major order.
    pub fn labeled_rows(&self) -> impl Iterator<Item = (u32, u32, Label)> + '_ {
        self.combined
            .iter()
            .zip(&self.labels)
            .map(|((u, v), &l)| (u, v, l))
    }

    /// The same training interactions with every label reset to normal.
    pub fn erase_labels(&self) -> Self {
        Self::clean(self.combined.clone())
    }
}

fn occupied_rows(train: &InteractionSet, forbidden: &InteractionSet) -> Result<InteractionSet> {
    train.union(forbidden)
}

/// Adds `round(rho * |train|)` uniformly random pairs absent from both
/// `train` and `forbidden`.
pub fn inject_noise_ratio(
    train: &InteractionSet,
    rho: f64,
    seed: u64,
    forbidden: &InteractionSet,
) -> Result<NoisyTrainSet> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rho must be >= 0, got {rho}"
        )));
    }
    let occupied = occupied_rows(train, forbidden)?;
    let (nu, ni) = (train.num_users(), train.num_items());
    let target = round_half_up(rho * train.len() as f64);
    let available = nu * ni - occupied.len();
    if target > available {
        return Err(Error::InsufficientAbsentPairs {
            requested: target,
            available,
        });
    }
    let mut rng = rng_from_seed(seed);
    let injected: Vec<(u32, u32)> = if target * 2 <= available {
        let mut chosen = BTreeSet::new();
        while chosen.len() < target {
            let u = rng.random_range(0..nu as u32);
            let v = rng.random_range(0..ni as u32);
            if !occupied.contains(u, v) {
                chosen.insert((u, v));
            }
        }
        chosen.into_iter().collect()
    } else {
        let absent: Vec<(u32, u32)> = (0..nu as u32)
            .flat_map(|u| (0..ni as u32).map(move |v| (u, v)))
            .filter(|&(u, v)| !occupied.contains(u, v))
            .collect();
        index::sample(&mut rng, absent.len(), target)
            .into_iter()
            .map(|i| absent[i])
            .collect()
    };
    NoisyTrainSet::with_injected(train, injected, Vec::new())
}

/// Adds `count` absent items to every user that has at least one training
/// interaction. Users whose absent pool is too small get what is left and a
/// [`Shortfall`] entry.
pub fn inject_noise_per_user(
    train: &InteractionSet,
    count: usize,
    seed: u64,
    forbidden: &InteractionSet,
) -> Result<NoisyTrainSet> {
    let occupied = occupied_rows(train, forbidden)?;
    let ni = train.num_items();
    let mut rng = rng_from_seed(seed);
    let mut injected = Vec::new();
    let mut shortfall = Vec::new();
    if count == 0 {
        return NoisyTrainSet::with_injected(train, injected, shortfall);
    }
    for u in 0..train.num_users() as u32 {
        if train.user_items(u).is_empty() {
            continue;
        }
        let taken = occupied.user_items(u);
        let absent_len = ni - taken.len();
        let n = count.min(absent_len);
        if absent_len >= 2 * count {
            let mut chosen = BTreeSet::new();
            while chosen.len() < n {
                let v = rng.random_range(0..ni as u32);
                if taken.binary_search(&v).is_err() {
                    chosen.insert(v);
                }
            }
            injected.extend(chosen.into_iter().map(|v| (u, v)));
        } else {
            let absent: Vec<u32> = (0..ni as u32)
                .filter(|v| taken.binary_search(v).is_err())
                .collect();
            injected.extend(
                index::sample(&mut rng, absent.len(), n)
                    .into_iter()
                    .map(|i| (u, absent[i])),
            );
        }
        if n < count {
            shortfall.push(Shortfall {
                user: u,
                requested: count,
                injected: n,
            });
        }
    }
    NoisyTrainSet::with_injected(train, injected, shortfall)
}

/// A generated interaction set together with the latent factors that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub set: InteractionSet,
    pub user_latents: Matrix,
    pub item_latents: Matrix,
}

/// Draws unit-Gaussian user and item latents and gives every user their
/// `per_user` highest-scoring items (ties go to the lower item index).
pub fn generate_synthetic(
    num_users: usize,
    num_items: usize,
    latent_dim: usize,
    per_user: usize,
    seed: u64,
) -> Result<SyntheticData> {
    if per_user > num_items {
        return Err(Error::InvalidArgument(format!(
            "per_user ({per_user}) exceeds num_items ({num_items})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut draw = |rows: usize| {
        let data = (0..rows * latent_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Matrix::from_vec(rows, latent_dim, data)
    };
    let user_latents = draw(num_users);
    let item_latents = draw(num_items);
    let mut pairs = Vec::with_capacity(num_users * per_user);
    let mut order: Vec<u32> = Vec::with_capacity(num_items);
    let mut scores = vec![0.0; num_items];
    for u in 0..num_users {
        let pu = user_latents.row(u);
        for (v, s) in scores.iter_mut().enumerate() {
            *s = crate::math::dot(pu, item_latents.row(v));
        }
        order.clear();
        order.extend(0..num_items as u32);
        order.sort_by(|&a, &b| {
            scores[b as usize]
                .total_cmp(&scores[a as usize])
                .then(a.cmp(&b))
        });
        pairs.extend(order[..per_user].iter().map(|&v| (u as u32, v)));
    }
    let set = InteractionSet::from_pairs(num_users, num_items, pairs)?;
    Ok(SyntheticData {
        set,
        user_latents,
        item_latents,
    })
}
