use serde::{Deserialize, Serialize};

use super::{BtError, ComparisonMatrix};
use crate::schema::{FactorSchema, OutcomeId, SchemaError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop once the largest coordinate change after normalization is below
    /// this.
    pub tol: f64,
    pub max_iter: usize,
    /// Added to every off-diagonal entry before fitting, in units of the
    /// mean off-diagonal weight (absolute when the matrix has no
    /// off-diagonal mass). Zero disables it.
    pub regularization: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            regularization: 1e-6,
        }
    }
}

/// Fitted Bradley-Terry strengths on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceModel {
    pub p: Vec<f64>,
    pub iterations: usize,
    pub max_change: f64,
    /// Hash of the schema the items index into, when bound to one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_hash: Option<String>,
}

impl SalienceModel {
    pub fn uniform(size: usize) -> Self {
        Self {
            p: vec![1.0 / size as f64; size],
            iterations: 0,
            max_change: 0.0,
            schema_hash: None,
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Attaches the schema the model was fitted over.
    pub fn bind(mut self, schema: &FactorSchema) -> Result<Self, BtError> {
        if self.p.len() != schema.item_count() {
            return Err(BtError::SchemaMismatch);
        }
        self.schema_hash = Some(schema.hash_hex());
        Ok(self)
    }

    pub fn matches_schema(&self, schema: &FactorSchema) -> bool {
        self.p.len() == schema.item_count()
            && self.schema_hash.as_deref().is_none_or(|h| h == schema.hash_hex())
    }

    /// Log-strength β_x = ln p_x.
    pub fn beta(&self) -> Vec<f64> {
        self.p.iter().map(|p| p.ln()).collect()
    }

    /// Probability that item x is preferred to item y: p_x / (p_x + p_y).
    pub fn pairwise_prob(&self, x: usize, y: usize) -> f64 {
        self.p[x] / (self.p[x] + self.p[y])
    }

    pub fn pairwise_prob_outcomes(&self, schema: &FactorSchema, x: OutcomeId, y: OutcomeId) -> Result<f64, SchemaError> {
        Ok(self.pairwise_prob(schema.flat_index(x)?, schema.flat_index(y)?))
    }

    /// The k most salient items, descending, ties broken by flat index.
    pub fn top_factors(&self, schema: &FactorSchema, k: usize) -> Result<Vec<(OutcomeId, f64)>, BtError> {
        if k == 0 || k > self.p.len() {
            return Err(BtError::InvalidK { k, items: self.p.len() });
        }
        if !self.matches_schema(schema) {
            return Err(BtError::SchemaMismatch);
        }
        let mut order: Vec<usize> = (0..self.p.len()).collect();
        order.sort_by(|&a, &b| self.p[b].total_cmp(&self.p[a]).then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .take(k)
            .map(|i| (schema.outcome_id(i).expect("index within schema"), self.p[i]))
            .collect())
    }
}

/// Fits strengths by the minorization-maximization update
///
/// ```text
/// p'_x = W_x / Σ_{y≠x} (w_xy + w_yx) / (p_x + p_y),   W_x = Σ_{y≠x} w_xy
/// ```
///
/// renormalizing onto the simplex after every sweep, from a uniform start.
pub fn fit(matrix: &ComparisonMatrix, opts: &FitOptions) -> Result<SalienceModel, BtError> {
    let m = matrix.size();
    if m == 0 {
        return Err(BtError::InvalidMatrix("empty matrix".into()));
    }
    if m == 1 {
        return Ok(SalienceModel::uniform(1));
    }

    let off_diagonal = matrix.off_diagonal_sum();
    let mean = off_diagonal / (m * (m - 1)) as f64;
    let eps = if mean > 0.0 {
        opts.regularization * mean
    } else {
        opts.regularization
    };

    let w = |x: usize, y: usize| matrix.get(x, y) + eps;
    let mut wins = vec![0.0; m];
    // Symmetric interaction counts n_xy = w_xy + w_yx, row-major.
    let mut games = vec![0.0; m * m];
    for x in 0..m {
        for y in 0..m {
            if x != y {
                wins[x] += w(x, y);
                games[x * m + y] = w(x, y) + w(y, x);
            }
        }
    }
    for x in 0..m {
        if wins[x] <= 0.0 || games[x * m..(x + 1) * m].iter().all(|&g| g <= 0.0) {
            return Err(BtError::DegenerateMatrix { item: x });
        }
    }

    let mut p = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    let mut max_change = f64::INFINITY;
    for iteration in 1..=opts.max_iter {
        for x in 0..m {
            let row = &games[x * m..(x + 1) * m];
            let mut denom = 0.0;
            for y in 0..m {
                if y != x {
                    denom += row[y] / (p[x] + p[y]);
                }
            }
            next[x] = wins[x] / denom;
        }
        let total: f64 = next.iter().sum();
        max_change = 0.0;
        for x in 0..m {
            let v = next[x] / total;
            max_change = f64::max(max_change, (v - p[x]).abs());
            p[x] = v;
        }
        if !max_change.is_finite() {
            break;
        }
        if max_change < opts.tol {
            return Ok(SalienceModel {
                p,
                iterations: iteration,
                max_change,
                schema_hash: None,
            });
        }
    }
    Err(BtError::NotConverged {
        last: SalienceModel {
            p,
            iterations: opts.max_iter,
            max_change,
            schema_hash: None,
        },
    })
}

/// Bradley-Terry log-likelihood Σ_{x≠y} w_xy · ln(p_x / (p_x + p_y)).
pub fn log_likelihood(matrix: &ComparisonMatrix, p: &[f64]) -> f64 {
    let m = matrix.size();
    let mut ll = 0.0;
    for x in 0..m {
        for y in 0..m {
            let w = matrix.get(x, y);
            if x != y && w > 0.0 {
                ll += w * (p[x] / (p[x] + p[y])).ln();
            }
        }
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::default_schema;
    use proptest::prelude::*;

    fn matrix(rows: &[&[f64]]) -> ComparisonMatrix {
        ComparisonMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn two_items_match_closed_form() {
        let model = fit(&matrix(&[&[0.0, 2.0], &[1.0, 0.0]]), &FitOptions::default()).unwrap();
        assert!((model.p[0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((model.p[1] - 1.0 / 3.0).abs() < 1e-6);
        assert!((model.pairwise_prob(0, 1) - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_matrix_fits_uniform() {
        let model = fit(
            &matrix(&[&[0.0, 1.0, 3.0], &[1.0, 0.0, 2.0], &[3.0, 2.0, 0.0]]),
            &FitOptions::default(),
        )
        .unwrap();
        for p in &model.p {
            assert!((p - 1.0 / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_matrix_without_regularization_is_degenerate() {
        let opts = FitOptions {
            regularization: 0.0,
            ..FitOptions::default()
        };
        assert!(matches!(
            fit(&ComparisonMatrix::zeros(3), &opts),
            Err(BtError::DegenerateMatrix { item: 0 })
        ));
        // Regularized, an empty matrix carries no preference: uniform.
        let model = fit(&ComparisonMatrix::zeros(3), &FitOptions::default()).unwrap();
        assert!(model.p.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn item_without_wins_is_degenerate_unregularized() {
        let opts = FitOptions {
            regularization: 0.0,
            ..FitOptions::default()
        };
        let m = matrix(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(fit(&m, &opts), Err(BtError::DegenerateMatrix { item: 1 })));
        // With regularization the loser keeps a small positive strength.
        let model = fit(&m, &FitOptions::default()).unwrap();
        assert!(model.p[1] > 0.0 && model.p[1] < 1e-5);
    }

    #[test]
    fn not_converged_carries_last_iterate() {
        let opts = FitOptions {
            max_iter: 2,
            tol: 1e-15,
            ..FitOptions::default()
        };
        match fit(&matrix(&[&[0.0, 5.0, 1.0], &[1.0, 0.0, 2.0], &[1.0, 3.0, 0.0]]), &opts) {
            Err(BtError::NotConverged { last }) => {
                assert_eq!(last.iterations, 2);
                assert!(last.max_change > 0.0);
                assert!((last.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn pairwise_identities() {
        let model = SalienceModel {
            p: vec![2.0 / 3.0, 1.0 / 3.0],
            iterations: 0,
            max_change: 0.0,
            schema_hash: None,
        };
        assert!((model.pairwise_prob(0, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((model.pairwise_prob(0, 1) + model.pairwise_prob(1, 0) - 1.0).abs() < 1e-15);
        let uniform = SalienceModel::uniform(4);
        assert_eq!(uniform.pairwise_prob(1, 3), 0.5);
    }

    #[test]
    fn top_factors_tie_break_and_full_list() {
        let schema = default_schema();
        let uniform = SalienceModel::uniform(33).bind(&schema).unwrap();
        let top = uniform.top_factors(&schema, 3).unwrap();
        let ids: Vec<_> = top.iter().map(|(id, _)| *id).collect();
        assert_eq!(ids, vec![OutcomeId::new(0, 0), OutcomeId::new(0, 1), OutcomeId::new(1, 0)]);
        let all = uniform.top_factors(&schema, 33).unwrap();
        assert!((all.iter().map(|(_, s)| s).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(uniform.top_factors(&schema, 0), Err(BtError::InvalidK { .. })));
        assert!(matches!(uniform.top_factors(&schema, 34), Err(BtError::InvalidK { .. })));

        let mut p = vec![0.01; 33];
        p[20] = 1.0 - 0.01 * 32.0;
        let peaked = SalienceModel { p, ..uniform };
        assert_eq!(peaked.top_factors(&schema, 1).unwrap()[0].0, schema.outcome_id(20).unwrap());
    }

    #[test]
    fn bind_checks_item_count() {
        assert!(SalienceModel::uniform(3).bind(&default_schema()).is_err());
    }

    proptest! {
        #[test]
        fn fitted_p_is_on_simplex(entries in proptest::collection::vec(0.0f64..5.0, 16)) {
            let mut rows = vec![vec![0.0; 4]; 4];
            for x in 0..4 {
                for y in 0..4 {
                    if x != y {
                        rows[x][y] = entries[x * 4 + y];
                    }
                }
            }
            let model = fit(&ComparisonMatrix::from_rows(rows).unwrap(), &FitOptions::default()).unwrap();
            prop_assert!((model.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(model.p.iter().all(|&p| p > 0.0));
        }

        #[test]
        fn more_wins_never_lower_strength(
            entries in proptest::collection::vec(0.2f64..4.0, 6),
            bump in 0.1f64..3.0,
            target in 0usize..3,
            rival in 1usize..3,
        ) {
            let rival = (target + rival) % 3;
            let off = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];
            let mut rows = vec![vec![0.0; 3]; 3];
            for (k, (x, y)) in off.iter().enumerate() {
                rows[*x][*y] = entries[k];
            }
            let base = fit(&ComparisonMatrix::from_rows(rows.clone()).unwrap(), &FitOptions::default()).unwrap();
            rows[target][rival] += bump;
            let bumped = fit(&ComparisonMatrix::from_rows(rows).unwrap(), &FitOptions::default()).unwrap();
            prop_assert!(bumped.p[target] >= base.p[target] - 1e-9);
        }
    }
}
