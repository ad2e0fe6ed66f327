//! Scoring models and their pairwise gradients: matrix factorization,
//! learned item-similarity kNN, cosine-similarity kNN and a most-popular
//! baseline, plus text persistence.

use std::io::{BufRead, Write};


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Triple};
use crate::error::{Error, Result};

/// Matrix factorization model: per-user and per-item factor rows, score is
/// their dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    num_users: usize,
    num_items: usize,
    k: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl MfModel {
    /// Gaussian-initialized model, entries i.i.d. N(0, init_sigma^2).
    pub fn init(
        num_users: usize,
        num_items: usize,
        k: usize,
        init_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config("factor dimensionality k must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| init_sigma * normal.sample(&mut rng)).collect()
        };
        let user_factors = draw(num_users * k);
        let item_factors = draw(num_items * k);
        Ok(MfModel {
            num_users,
            num_items,
            k,
            user_factors,
            item_factors,
        })
    }

    /// Builds a model from explicit row-major factor matrices.
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        k: usize,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config("factor dimensionality k must be >= 1".into()));
        }
        if user_factors.len() != num_users * k || item_factors.len() != num_items * k {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{} and {}x{} factor matrices",
                num_users, k, num_items, k
            )));
        }
        Ok(MfModel {
            num_users,
            num_items,
            k,
            user_factors,
            item_factors,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.k..(u + 1) * self.k]
    }

    pub fn item_row(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.k..(i + 1) * self.k]
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        self.user_row(user)
            .iter()
            .zip(self.item_row(item))
            .map(|(w, h)| w * h)
            .sum()
    }
}

/// Learned symmetric item-similarity matrix with zero diagonal, stored as
/// the dense strict upper triangle so that symmetry holds structurally.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    num_items: usize,
    cells: Vec<f64>,
}

impl KnnModel {
    pub fn zeros(num_items: usize) -> Self {
        let n = num_items;
        KnnModel {
            num_items,
            cells: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Triangular cell index for the unordered pair {a, b}, a != b.
    pub fn cell_index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a != b, "similarity diagonal is never addressed");
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        lo * self.num_items - lo * (lo + 1) / 2 + (hi - lo - 1)
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.cells[self.cell_index(a, b)]
    }

    pub fn set(&mut self, a: usize, b: usize, value: f64) {
        let idx = self.cell_index(a, b);
        self.cells[idx] = value;
    }

    /// Score of `item` for a user with training profile `profile`:
    /// sum of similarities to all profile items other than `item` itself.
    pub fn score(&self, profile: &[usize], item: usize) -> f64 {
        profile
            .iter()
            .filter(|&&l| l != item)
            .map(|&l| self.get(item, l))
            .sum()
    }
}

/// Heuristic cosine similarity between item support sets:
/// c_ij = |U_i ∩ U_j| / sqrt(|U_i|·|U_j|). Items without supporters get 0.
pub fn cosine_similarity(data: &Dataset) -> KnnModel {
    let mut model = KnnModel::zeros(data.num_items());
    // co-occurrence counts via user profiles
    let mut co = vec![0u64; model.num_cells()];
    for u in 0..data.num_users() {
        let profile = data.profile(u);
        for (a_pos, &a) in profile.iter().enumerate() {
            for &b in &profile[a_pos + 1..] {
                co[model.cell_index(a, b)] += 1;
            }
        }
    }
    for i in 0..data.num_items() {
        let ni = data.supporters(i).len();
        if ni == 0 {
            continue;
        }
        for j in i + 1..data.num_items() {
            let nj = data.supporters(j).len();
            if nj == 0 {
                continue;
            }
            let inter = co[model.cell_index(i, j)];
            if inter > 0 {
                let value = inter as f64 / ((ni as f64) * (nj as f64)).sqrt();
                model.set(i, j, value);
            }
        }
    }
    model
}

/// Non-personalized baseline scoring each item by its interaction count.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityModel {
    counts: Vec<u64>,
}

impl PopularityModel {
    pub fn from_dataset(data: &Dataset) -> Self {
        let counts = (0..data.num_items())
            .map(|i| data.supporters(i).len() as u64)
            .collect();
        PopularityModel { counts }
    }

    pub fn from_pairs(num_items: usize, pairs: &[(usize, usize)]) -> Self {
        let mut counts = vec![0u64; num_items];
        for &(_, i) in pairs {
            counts[i] += 1;
        }
        PopularityModel { counts }
    }

    pub fn num_items(&self) -> usize {
        self.counts.len()
    }

    pub fn score(&self, item: usize) -> f64 {
        self.counts[item] as f64
    }
}

/// Any scoring model usable for ranking and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mf(MfModel),
    Knn(KnnModel),
    Pop(PopularityModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Mf(_) => "mf",
            Model::Knn(_) => "knn",
            Model::Pop(_) => "pop",
        }
    }

    pub fn num_items(&self) -> usize {
        match self {
            Model::Mf(m) => m.num_items(),
            Model::Knn(m) => m.num_items(),
            Model::Pop(m) => m.num_items(),
        }
    }

    /// Per-item score x̂_ui. `profile` is the user's training profile and is
    /// only consulted by the kNN model.
    pub fn score(&self, user: usize, item: usize, profile: &[usize]) -> f64 {
        match self {
            Model::Mf(m) => m.score(user, item),
            Model::Knn(m) => m.score(profile, item),
            Model::Pop(m) => m.score(item),
        }
    }

    /// Pair score x̂_uij = x̂_ui − x̂_uj.
    pub fn pair_score(
        &self,
        user: usize,
        pos: usize,
        neg: usize,
        profile: &[usize],
    ) -> Result<f64> {
        if pos == neg {
            return Err(Error::Config(format!(
                "pair score needs two distinct items, got {pos} twice"
            )));
        }
        Ok(self.score(user, pos, profile) - self.score(user, neg, profile))
    }
}

/// Regularization group a parameter update belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegGroup {
    /// User factor row (λ_W).
    User,
    /// Positive item's factor row (λ_{H+}).
    ItemPos,
    /// Negative item's factor row (λ_{H−}).
    ItemNeg,
    /// Similarity cells incident to the positive item (λ_+).
    SimPos,
    /// Similarity cells incident to the negative item (λ_−).
    SimNeg,
}

/// A single model parameter coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    UserFactor { user: usize, f: usize },
    ItemFactor { item: usize, f: usize },
    /// Unordered similarity pair, stored as one triangular cell.
    Sim { a: usize, b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradEntry {
    pub coord: Coord,
    /// ∂x̂_uij/∂θ at the current parameters.
    pub value: f64,
    pub group: RegGroup,
}

/// Sparse gradient of the pair score: only coordinates with a nonzero
/// derivative appear.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient(pub Vec<GradEntry>);

/// MF derivatives: ∂/∂w_uf = h_if − h_jf, ∂/∂h_if = w_uf, ∂/∂h_jf = −w_uf.
pub fn mf_pair_gradient(model: &MfModel, t: &Triple) -> PairGradient {
    let mut entries = Vec::with_capacity(3 * model.k());
    let wu = model.user_row(t.user);
    let hi = model.item_row(t.pos);
    let hj = model.item_row(t.neg);
    for f in 0..model.k() {
        let d = hi[f] - hj[f];
        if d != 0.0 {
            entries.push(GradEntry {
                coord: Coord::UserFactor { user: t.user, f },
                value: d,
                group: RegGroup::User,
            });
        }
        if wu[f] != 0.0 {
            entries.push(GradEntry {
                coord: Coord::ItemFactor { item: t.pos, f },
                value: wu[f],
                group: RegGroup::ItemPos,
            });
            entries.push(GradEntry {
                coord: Coord::ItemFactor { item: t.neg, f },
                value: -wu[f],
                group: RegGroup::ItemNeg,
            });
        }
    }
    PairGradient(entries)
}

/// kNN derivatives: +1 on cells {i,l} for profile items l ≠ i, −1 on cells
/// {j,l} for all profile items l (j is never in the profile).
pub fn knn_pair_gradient(t: &Triple, profile: &[usize]) -> PairGradient {
    let mut entries = Vec::with_capacity(2 * profile.len());
    for &l in profile {
        if l != t.pos {
            entries.push(GradEntry {
                coord: Coord::Sim { a: t.pos, b: l },
                value: 1.0,
                group: RegGroup::SimPos,
            });
        }
        entries.push(GradEntry {
            coord: Coord::Sim { a: t.neg, b: l },
            value: -1.0,
            group: RegGroup::SimNeg,
        });
    }
    PairGradient(entries)
}

impl Model {
    pub fn param(&self, coord: Coord) -> f64 {
        match (self, coord) {
            (Model::Mf(m), Coord::UserFactor { user, f }) => m.user_row(user)[f],
            (Model::Mf(m), Coord::ItemFactor { item, f }) => m.item_row(item)[f],
            (Model::Knn(m), Coord::Sim { a, b }) => m.get(a, b),
            _ => panic!("coordinate does not belong to this model kind"),
        }
    }

    pub fn set_param(&mut self, coord: Coord, value: f64) {
        match (self, coord) {
            (Model::Mf(m), Coord::UserFactor { user, f }) => {
                m.user_factors[user * m.k + f] = value;
            }
            (Model::Mf(m), Coord::ItemFactor { item, f }) => {
                m.item_factors[item * m.k + f] = value;
            }
            (Model::Knn(m), Coord::Sim { a, b }) => m.set(a, b, value),
            _ => panic!("coordinate does not belong to this model kind"),
        }
    }

    /// Pair-score gradient for trainable models. The popularity baseline has
    /// no trainable parameters.
    pub fn pair_gradient(&self, t: &Triple, profile: &[usize]) -> Result<PairGradient> {
        match self {
            Model::Mf(m) => Ok(mf_pair_gradient(m, t)),
            Model::Knn(_) => Ok(knn_pair_gradient(t, profile)),
            Model::Pop(_) => Err(Error::Config(
                "the most-popular model has no trainable parameters".into(),
            )),
        }
    }
}

const MODEL_MAGIC: &str = "BPRMODEL";
const MODEL_VERSION: u32 = 1;

/// Writes a model as line-oriented text. Decimal encoding is the shortest
/// round-trip-exact representation, so load(save(m)) is bit-identical.
pub fn save_model<W: Write>(model: &Model, sink: &mut W) -> Result<()> {
    writeln!(sink, "{} {} {}", MODEL_MAGIC, model.kind(), MODEL_VERSION)?;
    match model {
        Model::Mf(m) => {
            writeln!(sink, "{} {} {}", m.num_users(), m.num_items(), m.k())?;
            for u in 0..m.num_users() {
                write_row(sink, m.user_row(u))?;
            }
            for i in 0..m.num_items() {
                write_row(sink, m.item_row(i))?;
            }
        }
        Model::Knn(m) => {
            writeln!(sink, "{}", m.num_items())?;
            // one row per item i holding cells (i, i+1..n)
            for i in 0..m.num_items() {
                let row: Vec<f64> = (i + 1..m.num_items()).map(|j| m.get(i, j)).collect();
                write_row(sink, &row)?;
            }
        }
        Model::Pop(m) => {
            writeln!(sink, "{}", m.num_items())?;
            let row: Vec<f64> = (0..m.num_items()).map(|i| m.score(i)).collect();
            write_row(sink, &row)?;
        }
    }
    Ok(())
}

fn write_row<W: Write>(sink: &mut W, row: &[f64]) -> Result<()> {
    let mut first = true;
    for v in row {
        if !first {
            write!(sink, " ")?;
        }
        write!(sink, "{}", v)?;
        first = false;
    }
    writeln!(sink)?;
    Ok(())
}

pub fn load_model<R: BufRead>(source: R) -> Result<Model> {
    let mut lines = source.lines();
    let header = next_line(&mut lines)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != MODEL_MAGIC {
        return Err(Error::Format(format!("bad header line: {header:?}")));
    }
    let version: u32 = parts[2]
        .parse()
        .map_err(|_| Error::Format(format!("bad version field: {:?}", parts[2])))?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {version}, expected {MODEL_VERSION}"
        )));
    }
    match parts[1] {
        "mf" => {
            let dims = parse_usizes(&next_line(&mut lines)?, 3)?;
            let (num_users, num_items, k) = (dims[0], dims[1], dims[2]);
            let mut user_factors = Vec::with_capacity(num_users * k);
            for _ in 0..num_users {
                parse_row(&next_line(&mut lines)?, k, &mut user_factors)?;
            }
            let mut item_factors = Vec::with_capacity(num_items * k);
            for _ in 0..num_items {
                parse_row(&next_line(&mut lines)?, k, &mut item_factors)?;
            }
            Ok(Model::Mf(MfModel {
                num_users,
                num_items,
                k,
                user_factors,
                item_factors,
            }))
        }
        "knn" => {
            let dims = parse_usizes(&next_line(&mut lines)?, 1)?;
            let num_items = dims[0];
            let mut cells = Vec::with_capacity(num_items * num_items.saturating_sub(1) / 2);
            for i in 0..num_items {
                let width = num_items - i - 1;
                if width == 0 {
                    // final row is empty but still present
                    next_line(&mut lines)?;
                    continue;
                }
                parse_row(&next_line(&mut lines)?, width, &mut cells)?;
            }
            Ok(Model::Knn(KnnModel { num_items, cells }))
        }
        "pop" => {
            let dims = parse_usizes(&next_line(&mut lines)?, 1)?;
            let num_items = dims[0];
            let mut values = Vec::with_capacity(num_items);
            parse_row(&next_line(&mut lines)?, num_items, &mut values)?;
            let counts = values
                .iter()
                .map(|&v| {
                    if v < 0.0 || v.fract() != 0.0 {
                        Err(Error::Format(format!("bad popularity count {v}")))
                    } else {
                        Ok(v as u64)
                    }
                })
                .collect::<Result<Vec<u64>>>()?;
            Ok(Model::Pop(PopularityModel { counts }))
        }
        other => Err(Error::Format(format!("unknown model kind {other:?}"))),
    }
}

fn next_line<B: Iterator<Item = std::io::Result<String>>>(lines: &mut B) -> Result<String> {
    match lines.next() {
        Some(line) => Ok(line?),
        None => Err(Error::Format("unexpected end of file".into())),
    }
}

fn parse_usizes(line: &str, expected: usize) -> Result<Vec<usize>> {
    let values: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("bad dimension line: {line:?}")))?;
    if values.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} dimensions, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn parse_row(line: &str, expected: usize, out: &mut Vec<f64>) -> Result<()> {
    let start = out.len();
    for token in line.split_whitespace() {
        let v: f64 = token
            .parse()
            .map_err(|_| Error::Format(format!("bad number {token:?}")))?;
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite value {token:?}")));
        }
        out.push(v);
    }
    if out.len() - start != expected {
        return Err(Error::Format(format!(
            "expected {expected} values per row, got {}",
            out.len() - start
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_interactions;
    use rand::Rng;
    use std::io::Cursor;

    fn random_mf(seed: u64) -> MfModel {
        MfModel::init(4, 6, 8, 0.5, seed).unwrap()
    }

    #[test]
    fn mf_score_two_terms() {
        let mut m = MfModel::init(1, 1, 2, 0.0, 0).unwrap();
        m.user_factors = vec![1.0, 0.0];
        m.item_factors = vec![0.5, 0.2];
        assert_eq!(m.score(0, 0), 0.5);
    }

    #[test]
    fn mf_zero_model_scores_zero() {
        let m = MfModel::init(3, 3, 4, 0.0, 0).unwrap();
        for u in 0..3 {
            for i in 0..3 {
                assert_eq!(m.score(u, i), 0.0);
            }
        }
    }

    #[test]
    fn mf_score_matches_naive_loop() {
        let m = random_mf(1);
        for u in 0..m.num_users() {
            for i in 0..m.num_items() {
                let mut naive = 0.0;
                for f in 0..m.k() {
                    naive += m.user_row(u)[f] * m.item_row(i)[f];
                }
                assert!((m.score(u, i) - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_determinism_and_spread() {
        let a = random_mf(42);
        let b = random_mf(42);
        assert_eq!(a, b);
        let big = MfModel::init(500, 500, 100, 0.1, 3).unwrap();
        let n = big.user_factors.len() as f64;
        let mean: f64 = big.user_factors.iter().sum::<f64>() / n;
        // sample mean of N(0, 0.1^2) entries stays within 4 sigma / sqrt(n)
        assert!(mean.abs() < 4.0 * 0.1 / n.sqrt(), "mean = {mean}");
    }

    #[test]
    fn init_rejects_zero_k() {
        assert!(MfModel::init(2, 2, 0, 0.1, 0).is_err());
    }

    #[test]
    fn knn_triangle_storage() {
        let m = KnnModel::zeros(5);
        assert_eq!(m.num_cells(), 10);
        let mut seen = std::collections::HashSet::new();
        for a in 0..5 {
            for b in 0..5 {
                if a == b {
                    continue;
                }
                let idx = m.cell_index(a, b);
                assert_eq!(idx, m.cell_index(b, a));
                assert!(idx < 10);
                if a < b {
                    seen.insert(idx);
                }
            }
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn knn_score_excludes_self() {
        let mut m = KnnModel::zeros(4);
        m.set(0, 1, 0.3);
        m.set(0, 2, -0.1);
        // profile = {i} only: empty sum
        assert_eq!(m.score(&[0], 0), 0.0);
        // profile = {1, 2}, i = 0 outside the profile
        assert!((m.score(&[1, 2], 0) - 0.2).abs() < 1e-15);
        // zero matrix
        let z = KnnModel::zeros(4);
        assert_eq!(z.score(&[0, 1, 2], 3), 0.0);
    }

    #[test]
    fn pair_score_basics() {
        let mut m = MfModel::init(1, 2, 1, 0.0, 0).unwrap();
        m.user_factors = vec![1.0];
        m.item_factors = vec![2.0, 0.5];
        let model = Model::Mf(m);
        assert_eq!(model.pair_score(0, 0, 1, &[]).unwrap(), 1.5);
        assert!(model.pair_score(0, 1, 1, &[]).is_err());
    }

    #[test]
    fn pair_score_antisymmetry() {
        let model = Model::Mf(random_mf(7));
        for i in 0..6 {
            for j in 0..6 {
                if i == j {
                    continue;
                }
                let a = model.pair_score(2, i, j, &[]).unwrap();
                let b = model.pair_score(2, j, i, &[]).unwrap();
                assert_eq!(a, -b);
            }
        }
    }

    #[test]
    fn mf_gradient_table() {
        let mut m = MfModel::init(1, 2, 2, 0.0, 0).unwrap();
        m.user_factors = vec![1.0, 0.0];
        m.item_factors = vec![0.5, 0.2, 0.1, 0.3];
        let t = Triple { user: 0, pos: 0, neg: 1 };
        let g = mf_pair_gradient(&m, &t);
        let lookup = |coord: Coord| {
            g.0.iter()
                .find(|e| e.coord == coord)
                .map(|e| e.value)
                .unwrap_or(0.0)
        };
        assert!((lookup(Coord::UserFactor { user: 0, f: 0 }) - 0.4).abs() < 1e-15);
        assert!((lookup(Coord::UserFactor { user: 0, f: 1 }) + 0.1).abs() < 1e-15);
        assert_eq!(lookup(Coord::ItemFactor { item: 0, f: 0 }), 1.0);
        assert_eq!(lookup(Coord::ItemFactor { item: 1, f: 0 }), -1.0);
        // w_u has a zero in dimension 1: those item coordinates are absent
        assert_eq!(lookup(Coord::ItemFactor { item: 0, f: 1 }), 0.0);
    }

    #[test]
    fn mf_gradient_identical_items_zero_user_part() {
        let mut m = MfModel::init(1, 2, 2, 0.0, 0).unwrap();
        m.user_factors = vec![0.7, -0.2];
        m.item_factors = vec![0.5, 0.2, 0.5, 0.2];
        let g = mf_pair_gradient(&m, &Triple { user: 0, pos: 0, neg: 1 });
        assert!(g
            .0
            .iter()
            .all(|e| !matches!(e.coord, Coord::UserFactor { .. })));
    }

    #[test]
    fn knn_gradient_singleton_profile() {
        let t = Triple { user: 0, pos: 2, neg: 4 };
        let g = knn_pair_gradient(&t, &[2]);
        assert_eq!(g.0.len(), 1);
        assert_eq!(g.0[0].coord, Coord::Sim { a: 4, b: 2 });
        assert_eq!(g.0[0].value, -1.0);
    }

    #[test]
    fn cosine_formula() {
        // U_x = {a, b}, U_y = {b}: c = 1 / sqrt(2)
        let d = load_interactions(Cursor::new("a\tx\nb\tx\nb\ty\n"))
            .unwrap()
            .dataset;
        let m = cosine_similarity(&d);
        assert!((m.get(0, 1) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cosine_identical_support_is_one() {
        let d = load_interactions(Cursor::new("a\tx\na\ty\nb\tx\nb\ty\n"))
            .unwrap()
            .dataset;
        let m = cosine_similarity(&d);
        assert!((m.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut text = String::new();
        for u in 0..20 {
            for i in 0..15 {
                if rng.gen_bool(0.3) {
                    text.push_str(&format!("u{u}\ti{i}\n"));
                }
            }
        }
        let d = load_interactions(Cursor::new(text)).unwrap().dataset;
        let m = cosine_similarity(&d);
        for i in 0..d.num_items() {
            for j in 0..d.num_items() {
                if i == j {
                    continue;
                }
                let mut inter = 0usize;
                for u in 0..d.num_users() {
                    if d.contains(u, i) && d.contains(u, j) {
                        inter += 1;
                    }
                }
                let (ni, nj) = (d.supporters(i).len(), d.supporters(j).len());
                let expected = if ni == 0 || nj == 0 {
                    0.0
                } else {
                    inter as f64 / ((ni * nj) as f64).sqrt()
                };
                assert!((m.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn popularity_scores() {
        let d = load_interactions(Cursor::new("a\tx\nb\tx\nc\tx\nc\ty\n"))
            .unwrap()
            .dataset;
        let m = PopularityModel::from_dataset(&d);
        assert_eq!(m.score(0), 3.0);
        assert_eq!(m.score(1), 1.0);
        // ranking induced by scores equals ranking by supporter counts
        let mut by_score: Vec<usize> = (0..d.num_items()).collect();
        by_score.sort_by(|&a, &b| {
            m.score(b).partial_cmp(&m.score(a)).unwrap().then(a.cmp(&b))
        });
        let mut by_count: Vec<usize> = (0..d.num_items()).collect();
        by_count.sort_by(|&a, &b| {
            d.supporters(b).len().cmp(&d.supporters(a).len()).then(a.cmp(&b))
        });
        assert_eq!(by_score, by_count);
    }

    #[test]
    fn save_load_round_trip_mf() {
        let model = Model::Mf(random_mf(5));
        let mut buf = Vec::new();
        save_model(&model, &mut buf).unwrap();
        let loaded = load_model(Cursor::new(&buf)).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn save_load_round_trip_knn_and_pop() {
        let mut knn = KnnModel::zeros(4);
        knn.set(0, 3, 0.12345678901234567);
        knn.set(1, 2, -7.5e-11);
        let model = Model::Knn(knn);
        let mut buf = Vec::new();
        save_model(&model, &mut buf).unwrap();
        assert_eq!(model, load_model(Cursor::new(&buf)).unwrap());

        let pop = Model::Pop(PopularityModel { counts: vec![3, 0, 1] });
        let mut buf = Vec::new();
        save_model(&pop, &mut buf).unwrap();
        assert_eq!(pop, load_model(Cursor::new(&buf)).unwrap());
    }

    #[test]
    fn load_rejects_truncated_file() {
        let model = Model::Mf(random_mf(2));
        let mut buf = Vec::new();
        save_model(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            load_model(Cursor::new(truncated)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn load_rejects_bad_version_and_header() {
        assert!(matches!(
            load_model(Cursor::new("BPRMODEL mf 999\n1 1 1\n0\n0\n")),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            load_model(Cursor::new("NOTAMODEL mf 1\n")),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn load_rejects_non_finite() {
        assert!(matches!(
            load_model(Cursor::new("BPRMODEL mf 1\n1 1 1\nNaN\n0\n")),
            Err(Error::Format(_))
        ));
    }
}
