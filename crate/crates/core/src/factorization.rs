//! Factor model shared by the three tensors and its reconstruction algebra.
//!
//! ```text
//! X̂[i,j,k]  = G1 ×1 U[i] ×2 I[j] ×3 F̃[k]     k in 0..=p (p is the dummy rating feature)
//! Ŷu[i,k,w] = G2 ×1 U[i] ×2 F[k] ×3 O[w]     k in 0..p
//! Ŷi[j,k,w] = G3 ×1 I[j] ×2 F[k] ×3 O[w]     k in 0..p
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{Matrix, Tensor3};
use crate::error::{MterError, Result};

/// Latent dimensions for users (a), items (b), features (c) and opinions (d).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dims {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl Dims {
    pub fn new(a: usize, b: usize, c: usize, d: usize) -> Self {
        Self { a, b, c, d }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.a, self.b, self.c, self.d].contains(&0) {
            return Err(MterError::Config(format!(
                "latent dimensions must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self::new(8, 8, 6, 6)
    }
}

/// Non-negative factor matrices and cores. `features` holds F̃: rows `0..p`
/// are F, row `p` is the dummy overall-rating feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub users: Matrix,
    pub items: Matrix,
    pub features: Matrix,
    pub opinions: Matrix,
    pub g1: Tensor3,
    pub g2: Tensor3,
    pub g3: Tensor3,
}

/// Chained contraction `core ×1 x ×2 y ×3 z` with row vectors.
///
/// The first product yields the `dims[1] × dims[2]` matrix T, the second a
/// vector over the last mode, which is then projected onto `z`.
#[inline]
pub fn contract3(core: &Tensor3, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let last = contract_first_two(core, x, y);
    last.iter().zip(z).map(|(a, b)| a * b).sum()
}

/// `core ×1 x ×2 y`, a vector over the last mode.
pub fn contract_first_two(core: &Tensor3, x: &[f64], y: &[f64]) -> Vec<f64> {
    let [d0, d1, d2] = core.dims();
    let g = core.as_slice();
    let mut out = vec![0.0; d2];
    for r in 0..d0 {
        let xr = x[r];
        if xr == 0.0 {
            continue;
        }
        for t in 0..d1 {
            let w = xr * y[t];
            let base = (r * d1 + t) * d2;
            for (o, gv) in out.iter_mut().zip(&g[base..base + d2]) {
                *o += w * gv;
            }
        }
    }
    out
}

/// `core ×1 x ×3 z`, a vector over the middle mode.
pub fn contract_first_last(core: &Tensor3, x: &[f64], z: &[f64]) -> Vec<f64> {
    let [d0, d1, d2] = core.dims();
    let g = core.as_slice();
    let mut out = vec![0.0; d1];
    for r in 0..d0 {
        let xr = x[r];
        if xr == 0.0 {
            continue;
        }
        for (t, o) in out.iter_mut().enumerate() {
            let base = (r * d1 + t) * d2;
            let s: f64 = g[base..base + d2].iter().zip(z).map(|(a, b)| a * b).sum();
            *o += xr * s;
        }
    }
    out
}

/// Value of `core ×1 x ×2 y ×3 z` together with its partial derivatives with
/// respect to `x`, `y` and `z`.
pub struct Contraction {
    pub value: f64,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dz: Vec<f64>,
}

pub fn contract_with_partials(core: &Tensor3, x: &[f64], y: &[f64], z: &[f64]) -> Contraction {
    let [d0, d1, d2] = core.dims();
    let g = core.as_slice();
    let mut dx = vec![0.0; d0];
    let mut dy = vec![0.0; d1];
    let mut dz = vec![0.0; d2];
    for r in 0..d0 {
        for t in 0..d1 {
            let base = (r * d1 + t) * d2;
            let fiber = &g[base..base + d2];
            let s: f64 = fiber.iter().zip(z).map(|(a, b)| a * b).sum();
            dx[r] += s * y[t];
            dy[t] += s * x[r];
            let w = x[r] * y[t];
            for (o, gv) in dz.iter_mut().zip(fiber) {
                *o += w * gv;
            }
        }
    }
    let value = dx.iter().zip(x).map(|(a, b)| a * b).sum();
    Contraction { value, dx, dy, dz }
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(MterError::IndexOutOfRange { what, index, len });
    }
    Ok(())
}

impl FactorModel {
    /// Assembles a model, checking that shapes agree and entries are >= 0.
    pub fn from_parts(
        users: Matrix,
        items: Matrix,
        features: Matrix,
        opinions: Matrix,
        g1: Tensor3,
        g2: Tensor3,
        g3: Tensor3,
    ) -> Result<Self> {
        let (a, b, c, d) = (users.cols(), items.cols(), features.cols(), opinions.cols());
        let expect = [
            ("G1", &g1, [a, b, c]),
            ("G2", &g2, [a, c, d]),
            ("G3", &g3, [b, c, d]),
        ];
        for (name, g, dims) in expect {
            if g.dims() != dims {
                return Err(MterError::Shape(format!(
                    "{name} is {:?}, expected {dims:?}",
                    g.dims()
                )));
            }
        }
        if features.rows() == 0 {
            return Err(MterError::Shape(
                "feature matrix needs the dummy row".into(),
            ));
        }
        let model = Self {
            users,
            items,
            features,
            opinions,
            g1,
            g2,
            g3,
        };
        if let Some((name, v)) = model.first_negative() {
            return Err(MterError::Validation(format!(
                "{name} contains negative value {v}"
            )));
        }
        Ok(model)
    }

    pub fn dims(&self) -> Dims {
        Dims::new(
            self.users.cols(),
            self.items.cols(),
            self.features.cols(),
            self.opinions.cols(),
        )
    }

    pub fn m(&self) -> usize {
        self.users.rows()
    }

    pub fn n(&self) -> usize {
        self.items.rows()
    }

    /// Number of real features; the dummy sits at index `p()`.
    pub fn p(&self) -> usize {
        self.features.rows() - 1
    }

    pub fn q(&self) -> usize {
        self.opinions.rows()
    }

    pub fn dummy_feature(&self) -> usize {
        self.p()
    }

    pub fn f_dummy(&self) -> &[f64] {
        self.features.row(self.p())
    }

    /// Same shapes, all zeros. Used as a gradient container.
    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            users: z(&self.users),
            items: z(&self.items),
            features: z(&self.features),
            opinions: z(&self.opinions),
            g1: Tensor3::zeros(self.g1.dims()),
            g2: Tensor3::zeros(self.g2.dims()),
            g3: Tensor3::zeros(self.g3.dims()),
        }
    }

    pub const PARAM_NAMES: [&'static str; 7] = ["U", "I", "F", "O", "G1", "G2", "G3"];

    /// Parameter blocks in the order of [`FactorModel::PARAM_NAMES`].
    pub fn params(&self) -> [&[f64]; 7] {
        [
            self.users.as_slice(),
            self.items.as_slice(),
            self.features.as_slice(),
            self.opinions.as_slice(),
            self.g1.as_slice(),
            self.g2.as_slice(),
            self.g3.as_slice(),
        ]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.users.as_mut_slice(),
            self.items.as_mut_slice(),
            self.features.as_mut_slice(),
            self.opinions.as_mut_slice(),
            self.g1.as_mut_slice(),
            self.g2.as_mut_slice(),
            self.g3.as_mut_slice(),
        ]
    }

    pub fn first_negative(&self) -> Option<(&'static str, f64)> {
        Self::PARAM_NAMES
            .iter()
            .zip(self.params())
            .find_map(|(name, block)| block.iter().find(|v| !(**v >= 0.0)).map(|&v| (*name, v)))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.first_negative().is_none()
    }

    fn check_x(&self, i: usize, j: usize, k: usize) -> Result<()> {
        check_index("user", i, self.m())?;
        check_index("item", j, self.n())?;
        check_index("feature", k, self.p() + 1)
    }

    fn check_feature(&self, k: usize) -> Result<()> {
        if k == self.p() {
            return Err(MterError::Domain(
                "the overall-rating feature has no opinion phrases".into(),
            ));
        }
        check_index("feature", k, self.p())
    }

    #[inline]
    pub(crate) fn x_unchecked(&self, i: usize, j: usize, k: usize) -> f64 {
        contract3(
            &self.g1,
            self.users.row(i),
            self.items.row(j),
            self.features.row(k),
        )
    }

    #[inline]
    pub(crate) fn yu_unchecked(&self, i: usize, k: usize, w: usize) -> f64 {
        contract3(
            &self.g2,
            self.users.row(i),
            self.features.row(k),
            self.opinions.row(w),
        )
    }

    #[inline]
    pub(crate) fn yi_unchecked(&self, j: usize, k: usize, w: usize) -> f64 {
        contract3(
            &self.g3,
            self.items.row(j),
            self.features.row(k),
            self.opinions.row(w),
        )
    }

    /// Predicted affinity of user `i`, item `j` and feature `k` (`k == p` is
    /// the overall rating).
    pub fn predict_x(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check_x(i, j, k)?;
        Ok(self.x_unchecked(i, j, k))
    }

    pub fn predict_overall(&self, i: usize, j: usize) -> Result<f64> {
        self.predict_x(i, j, self.p())
    }

    pub fn predict_yu(&self, i: usize, k: usize, w: usize) -> Result<f64> {
        check_index("user", i, self.m())?;
        self.check_feature(k)?;
        check_index("opinion", w, self.q())?;
        Ok(self.yu_unchecked(i, k, w))
    }

    pub fn predict_yi(&self, j: usize, k: usize, w: usize) -> Result<f64> {
        check_index("item", j, self.n())?;
        self.check_feature(k)?;
        check_index("opinion", w, self.q())?;
        Ok(self.yi_unchecked(j, k, w))
    }

    /// Phrase score for user `i` describing feature `k` of item `j` with
    /// phrase `w`: the product of the user-side and item-side predictions.
    pub fn opinion_score(&self, i: usize, j: usize, k: usize, w: usize) -> Result<f64> {
        Ok(self.predict_yu(i, k, w)? * self.predict_yi(j, k, w)?)
    }

    /// Predicted overall rating of user `i` for every item.
    pub fn overall_scores(&self, i: usize) -> Result<Vec<f64>> {
        check_index("user", i, self.m())?;
        let per_item = contract_first_last(&self.g1, self.users.row(i), self.f_dummy());
        Ok((0..self.n())
            .map(|j| {
                self.items
                    .row(j)
                    .iter()
                    .zip(&per_item)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// Predicted scores of all real features for user `i` and item `j`.
    pub fn feature_scores(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        self.check_x(i, j, 0)?;
        let t = contract_first_two(&self.g1, self.users.row(i), self.items.row(j));
        Ok((0..self.p())
            .map(|k| {
                self.features
                    .row(k)
                    .iter()
                    .zip(&t)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// Phrase scores for all opinions of feature `k`, user `i` and item `j`.
    pub fn opinion_scores(&self, i: usize, j: usize, k: usize) -> Result<Vec<f64>> {
        check_index("user", i, self.m())?;
        check_index("item", j, self.n())?;
        self.check_feature(k)?;
        let u = contract_first_two(&self.g2, self.users.row(i), self.features.row(k));
        let v = contract_first_two(&self.g3, self.items.row(j), self.features.row(k));
        Ok((0..self.q())
            .map(|w| {
                let o = self.opinions.row(w);
                let a: f64 = u.iter().zip(o).map(|(x, y)| x * y).sum();
                let b: f64 = v.iter().zip(o).map(|(x, y)| x * y).sum();
                a * b
            })
            .collect())
    }
}

/// Random model with entries i.i.d. uniform on `(0, scale]`.
pub fn init_model(
    dims: Dims,
    m: usize,
    n: usize,
    p: usize,
    q: usize,
    seed: u64,
    scale: f64,
) -> Result<FactorModel> {
    dims.validate()?;
    if [m, n, p, q].contains(&0) {
        return Err(MterError::Config(format!(
            "entity counts must be >= 1: m={m} n={n} p={p} q={q}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(MterError::Config(format!(
            "init scale must be > 0, got {scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| scale * (1.0 - rng.random::<f64>()))
            .collect()
    };
    let Dims { a, b, c, d } = dims;
    let users = Matrix::from_vec(m, a, draw(m * a))?;
    let items = Matrix::from_vec(n, b, draw(n * b))?;
    let features = Matrix::from_vec(p + 1, c, draw((p + 1) * c))?;
    let opinions = Matrix::from_vec(q, d, draw(q * d))?;
    let g1 = Tensor3::from_vec([a, b, c], draw(a * b * c))?;
    let g2 = Tensor3::from_vec([a, c, d], draw(a * c * d))?;
    let g3 = Tensor3::from_vec([b, c, d], draw(b * c * d))?;
    Ok(FactorModel {
        users,
        items,
        features,
        opinions,
        g1,
        g2,
        g3,
    })
}
