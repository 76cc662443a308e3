//! Dot-product scorers: matrix factorization (`layers = 0`) and light graph
//! propagation over the user–item bipartite graph (`layers >= 1`).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::dataset::InteractionSet;
use crate::math::{dot, sqrt};
use crate::{rng_from_seed, Error, Result};

/// Standard deviation of the Gaussian used by [`init_model`].
pub const INIT_STD: f64 = 0.1;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// User and item tables used for scoring: either the raw embeddings or their
/// propagated counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub users: Matrix,
    pub items: Matrix,
}

impl Tables {
    #[inline]
    pub fn score(&self, u: u32, v: u32) -> f64 {
        dot(self.users.row(u as usize), self.items.row(v as usize))
    }
}

/// Model parameters Θ plus a propagation cache.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    params: Tables,
    layers: usize,
    seed: u64,
    propagated: Option<Tables>,
}

/// Draws all embeddings from `N(0, 0.1²)`.
pub fn init_model(
    num_users: usize,
    num_items: usize,
    dim: usize,
    layers: usize,
    seed: u64,
) -> Result<ModelState> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut draw = |rows: usize| {
        Matrix::from_vec(
            rows,
            dim,
            (0..rows * dim).map(|_| normal.sample(&mut rng)).collect(),
        )
    };
    let users = draw(num_users);
    let items = draw(num_items);
    Ok(ModelState {
        params: Tables { users, items },
        layers,
        seed,
        propagated: None,
    })
}

impl ModelState {
    /// Wraps explicit embedding tables, e.g. a loaded checkpoint or known
    /// ground-truth latents.
    pub fn from_embeddings(users: Matrix, items: Matrix, layers: usize, seed: u64) -> Result<Self> {
        if users.cols() != items.cols() || users.cols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "user dim {} vs item dim {}",
                users.cols(),
                items.cols()
            )));
        }
        if !users.is_finite() || !items.is_finite() {
            return Err(Error::InvalidArgument("non-finite embedding entry".into()));
        }
        Ok(Self {
            params: Tables { users, items },
            layers,
            seed,
            propagated: None,
        })
    }

    pub fn num_users(&self) -> usize {
        self.params.users.rows()
    }

    pub fn num_items(&self) -> usize {
        self.params.items.rows()
    }

    pub fn dim(&self) -> usize {
        self.params.users.cols()
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn user_embeddings(&self) -> &Matrix {
        &self.params.users
    }

    pub fn item_embeddings(&self) -> &Matrix {
        &self.params.items
    }

    /// Raw parameters, regardless of propagation.
    pub fn params(&self) -> &Tables {
        &self.params
    }

    /// Mutable access to the raw parameters. Invalidates the propagation
    /// cache.
    pub fn params_mut(&mut self) -> &mut Tables {
        self.propagated = None;
        &mut self.params
    }

    pub fn cache_is_fresh(&self) -> bool {
        self.layers == 0 || self.propagated.is_some()
    }

    /// Recomputes the propagated tables over `graph` and caches them.
    pub fn propagate(&mut self, graph: &InteractionSet) -> Result<&Tables> {
        if self.layers == 0 {
            return Err(Error::InvalidArgument(
                "propagate requires layers >= 1".into(),
            ));
        }
        self.check_graph(graph)?;
        let tables = propagate_tables(&self.params, graph, self.layers);
        Ok(self.propagated.insert(tables))
    }

    /// Propagates if needed (layers >= 1) so that scoring is valid.
    pub fn refresh(&mut self, graph: &InteractionSet) -> Result<()> {
        if self.layers > 0 && self.propagated.is_none() {
            self.propagate(graph)?;
        }
        Ok(())
    }

    /// The tables scores are computed from.
    pub fn scoring_tables(&self) -> Result<&Tables> {
        if self.layers == 0 {
            Ok(&self.params)
        } else {
            self.propagated.as_ref().ok_or(Error::StaleCache)
        }
    }

    pub fn score(&self, u: u32, v: u32) -> Result<f64> {
        self.check_index(u, v)?;
        Ok(self.scoring_tables()?.score(u, v))
    }

    /// Scores of user `u` against every item.
    pub fn score_all(&self, u: u32) -> Result<Vec<f64>> {
        self.check_index(u, 0)?;
        let t = self.scoring_tables()?;
        let pu = t.users.row(u as usize);
        Ok((0..t.items.rows())
            .map(|v| dot(pu, t.items.row(v)))
            .collect())
    }

    fn check_index(&self, u: u32, v: u32) -> Result<()> {
        if u as usize >= self.num_users()
            || (v as usize >= self.num_items() && self.num_items() > 0)
        {
            return Err(Error::IndexOutOfRange(format!("user {u}, item {v}")));
        }
        Ok(())
    }

    fn check_graph(&self, graph: &InteractionSet) -> Result<()> {
        if graph.num_users() != self.num_users() || graph.num_items() != self.num_items() {
            return Err(Error::DimensionMismatch(format!(
                "model {}x{} vs graph {}x{}",
                self.num_users(),
                self.num_items(),
                graph.num_users(),
                graph.num_items()
            )));
        }
        Ok(())
    }
}

/// Symmetric-normalized neighbor averaging for `layers` steps; the result is
/// the mean of layers `0..=layers`. Nodes without edges keep their layer-0
/// embedding.
pub fn propagate_tables(params: &Tables, graph: &InteractionSet, layers: usize) -> Tables {
    let dim = params.users.cols();
    let udeg = graph.user_degrees();
    let ideg = graph.item_degrees();
    let mut cur_u = params.users.clone();
    let mut cur_i = params.items.clone();
    let mut acc_u = params.users.clone();
    let mut acc_i = params.items.clone();
    for _ in 0..layers {
        let mut next_u = Matrix::zeros(cur_u.rows(), dim);
        let mut next_i = Matrix::zeros(cur_i.rows(), dim);
        for (u, v) in graph.iter() {
            let (u, v) = (u as usize, v as usize);
            let w = 1.0 / sqrt((udeg[u] * ideg[v]) as f64);
            for (d, x) in next_u.row_mut(u).iter_mut().zip(cur_i.row(v)) {
                *d += w * x;
            }
            for (d, x) in next_i.row_mut(v).iter_mut().zip(cur_u.row(u)) {
                *d += w * x;
            }
        }
        for (a, x) in acc_u.data.iter_mut().zip(&next_u.data) {
            *a += x;
        }
        for (a, x) in acc_i.data.iter_mut().zip(&next_i.data) {
            *a += x;
        }
        cur_u = next_u;
        cur_i = next_i;
    }
    let inv = 1.0 / (layers + 1) as f64;
    finish_mean(&mut acc_u, &params.users, &udeg, inv);
    finish_mean(&mut acc_i, &params.items, &ideg, inv);
    Tables {
        users: acc_u,
        items: acc_i,
    }
}

fn finish_mean(acc: &mut Matrix, layer0: &Matrix, degree: &[usize], inv: f64) {
    for (r, &deg) in degree.iter().enumerate() {
        if deg == 0 {
            acc.row_mut(r).copy_from_slice(layer0.row(r));
        } else {
            acc.row_mut(r).iter_mut().for_each(|x| *x *= inv);
        }
    }
}
