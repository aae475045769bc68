//! Synthetic anchor units built from the constraint table.
//!
//! A positive anchor for dimension j answers "yes" to every item coded
//! positive on j, "no" to every item coded negative, and is missing
//! elsewhere; its θ_j is pinned at +D. The negative anchor mirrors it.

use serde::{Deserialize, Serialize};

use crate::error::{IrtmError, Result};
use crate::model::{ChainDraws, ConstraintSet, PosteriorDraws, Response, ResponseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorSign {
    Positive,
    Negative,
}

impl AnchorSign {
    fn factor(self) -> f64 {
        match self {
            AnchorSign::Positive => 1.0,
            AnchorSign::Negative => -1.0,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            AnchorSign::Positive => "pos",
            AnchorSign::Negative => "neg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub dimension: usize,
    pub sign: AnchorSign,
    pub responses: Vec<Response>,
    /// Fixed coordinates; only `dimension` is set.
    pub fixed_theta: Vec<Option<f64>>,
}

/// Build one anchor for `dimension`.
pub fn make_anchor(
    constraints: &ConstraintSet,
    dimension: usize,
    sign: AnchorSign,
    d_value: f64,
) -> Result<Anchor> {
    let d = constraints.n_dims();
    if dimension >= d {
        return Err(IrtmError::Contract(format!(
            "dimension {dimension} out of range for d = {d}"
        )));
    }
    if !(d_value > 0.0) {
        return Err(IrtmError::Contract(format!("anchor distance must be positive, got {d_value}")));
    }
    if !constraints.is_anchorable(dimension) {
        return Err(IrtmError::AnchorUnavailable {
            dimension,
            name: constraints.dimension_names()[dimension].clone(),
        });
    }
    let positive_answer = sign == AnchorSign::Positive;
    let responses = constraints
        .codes()
        .column(dimension)
        .iter()
        .map(|c| match c {
            Some(v) if *v > 0.0 => Response::from_bool(positive_answer),
            Some(v) if *v < 0.0 => Response::from_bool(!positive_answer),
            _ => Response::Missing,
        })
        .collect();
    let mut fixed_theta = vec![None; d];
    fixed_theta[dimension] = Some(sign.factor() * d_value);
    Ok(Anchor {
        dimension,
        sign,
        responses,
        fixed_theta,
    })
}

/// Which dimensions receive anchors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AnchorSelection {
    /// Every dimension that has at least one signed code.
    #[default]
    All,
    None,
    /// Exactly these dimensions; an unanchorable one is an error.
    Dims(Vec<usize>),
}

impl AnchorSelection {
    pub fn is_none(&self) -> bool {
        matches!(self, AnchorSelection::None) || matches!(self, AnchorSelection::Dims(v) if v.is_empty())
    }
}

/// Per-row record of synthetic rows and pinned θ coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorMask {
    synthetic: Vec<bool>,
    fixed: Vec<Vec<Option<f64>>>,
}

impl AnchorMask {
    pub fn empty(n_rows: usize, d: usize) -> Self {
        Self {
            synthetic: vec![false; n_rows],
            fixed: vec![vec![None; d]; n_rows],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.synthetic.len()
    }

    pub fn n_real(&self) -> usize {
        self.synthetic.iter().filter(|s| !**s).count()
    }

    pub fn n_synthetic(&self) -> usize {
        self.n_rows() - self.n_real()
    }

    pub fn is_synthetic(&self, row: usize) -> bool {
        self.synthetic[row]
    }

    pub fn fixed(&self, row: usize) -> &[Option<f64>] {
        &self.fixed[row]
    }

    pub fn has_fixed(&self, row: usize) -> bool {
        self.fixed[row].iter().any(|f| f.is_some())
    }

    /// Indices of the real (non-synthetic) rows, in order.
    pub fn real_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| !self.synthetic[i]).collect()
    }
}

/// A real unit whose answers match an anchor on the anchor's support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateMatch {
    pub unit: usize,
    pub unit_id: String,
    pub dimension: usize,
    pub sign: AnchorSign,
    pub fixed_value: f64,
}

#[derive(Debug, Clone)]
pub struct AugmentedData {
    pub data: ResponseMatrix,
    pub mask: AnchorMask,
    pub anchors: Vec<Anchor>,
    pub duplicates: Vec<DuplicateMatch>,
}

/// Append anchors for the selected dimensions and pin their coordinates.
///
/// Real units whose observed answers equal an anchor's non-missing pattern
/// get the same pinned coordinate.
pub fn augment_with_anchors(
    data: &ResponseMatrix,
    constraints: &ConstraintSet,
    d_value: f64,
    which: &AnchorSelection,
) -> Result<AugmentedData> {
    let d = constraints.n_dims();
    if constraints.n_items() != data.n_items() {
        return Err(IrtmError::Validation(format!(
            "constraint table has {} items but the data has {}",
            constraints.n_items(),
            data.n_items()
        )));
    }
    let dims: Vec<usize> = match which {
        AnchorSelection::None => Vec::new(),
        AnchorSelection::All => (0..d).filter(|&j| constraints.is_anchorable(j)).collect(),
        AnchorSelection::Dims(v) => v.clone(),
    };
    let mut anchors = Vec::with_capacity(2 * dims.len());
    for &j in &dims {
        for sign in [AnchorSign::Positive, AnchorSign::Negative] {
            anchors.push(make_anchor(constraints, j, sign, d_value)?);
        }
    }

    let n = data.n_units();
    let mut mask = AnchorMask::empty(n + anchors.len(), d);
    let mut duplicates = Vec::new();
    for anchor in &anchors {
        let value = anchor.fixed_theta[anchor.dimension].expect("anchor coordinate set");
        for i in 0..n {
            let matches = anchor
                .responses
                .iter()
                .enumerate()
                .filter(|(_, r)| !r.is_missing())
                .all(|(k, r)| data.get(i, k) == *r);
            if matches {
                mask.fixed[i][anchor.dimension] = Some(value);
                duplicates.push(DuplicateMatch {
                    unit: i,
                    unit_id: data.unit_ids()[i].clone(),
                    dimension: anchor.dimension,
                    sign: anchor.sign,
                    fixed_value: value,
                });
            }
        }
    }
    let rows: Vec<(String, Vec<Response>)> = anchors
        .iter()
        .map(|a| {
            (
                format!("__anchor_{}_{}", a.sign.tag(), constraints.dimension_names()[a.dimension]),
                a.responses.clone(),
            )
        })
        .collect();
    for (r, anchor) in anchors.iter().enumerate() {
        mask.synthetic[n + r] = true;
        mask.fixed[n + r] = anchor.fixed_theta.clone();
    }
    let data = if rows.is_empty() {
        data.clone()
    } else {
        data.with_rows(&rows)
    };
    Ok(AugmentedData {
        data,
        mask,
        anchors,
        duplicates,
    })
}

/// Drop synthetic rows from every θ draw. Real units, duplicates included,
/// are kept.
pub fn strip_anchors(draws: &PosteriorDraws, mask: &AnchorMask) -> PosteriorDraws {
    if mask.n_synthetic() == 0 {
        return draws.clone();
    }
    let keep = mask.real_rows();
    let chains = draws
        .chains
        .iter()
        .map(|c| ChainDraws {
            theta: c.theta.select(ndarray::Axis(1), &keep),
            lambda: c.lambda.clone(),
            b: c.b.clone(),
            sigma: c.sigma.clone(),
        })
        .collect();
    PosteriorDraws {
        chains,
        unit_ids: keep.iter().map(|&i| draws.unit_ids[i].clone()).collect(),
        ..draws.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn column_set() -> ConstraintSet {
        let codes = Array2::from_shape_vec(
            (4, 2),
            vec![
                Some(1.0),
                None,
                Some(-1.0),
                Some(1.0),
                Some(0.0),
                Some(-1.0),
                None,
                Some(0.0),
            ],
        )
        .unwrap();
        ConstraintSet::from_codes(codes).unwrap()
    }

    #[test]
    fn positive_anchor_follows_codes() {
        let a = make_anchor(&column_set(), 0, AnchorSign::Positive, 4.0).unwrap();
        use Response::*;
        assert_eq!(a.responses, vec![Yes, No, Missing, Missing]);
        assert_eq!(a.fixed_theta, vec![Some(4.0), None]);
    }

    #[test]
    fn negative_anchor_flips() {
        let a = make_anchor(&column_set(), 0, AnchorSign::Negative, 4.0).unwrap();
        use Response::*;
        assert_eq!(a.responses, vec![No, Yes, Missing, Missing]);
        assert_eq!(a.fixed_theta, vec![Some(-4.0), None]);
    }

    #[test]
    fn anchors_are_complementary_and_idempotent() {
        let c = column_set();
        for j in 0..2 {
            let p = make_anchor(&c, j, AnchorSign::Positive, 4.0).unwrap();
            let n = make_anchor(&c, j, AnchorSign::Negative, 4.0).unwrap();
            assert_eq!(p, make_anchor(&c, j, AnchorSign::Positive, 4.0).unwrap());
            for (x, y) in p.responses.iter().zip(&n.responses) {
                match (x, y) {
                    (Response::Missing, Response::Missing) => {}
                    (Response::Yes, Response::No) | (Response::No, Response::Yes) => {}
                    other => panic!("not complementary: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn unavailable_anchor_names_dimension() {
        let codes = Array2::from_shape_vec((2, 1), vec![Some(0.0), None]).unwrap();
        let c = ConstraintSet::from_codes(codes).unwrap();
        match make_anchor(&c, 0, AnchorSign::Positive, 4.0) {
            Err(IrtmError::AnchorUnavailable { dimension, name }) => {
                assert_eq!(dimension, 0);
                assert_eq!(name, "dim1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn augment_adds_two_rows_per_dimension() {
        let data = ResponseMatrix::from_values(Array2::from_elem((3, 4), Response::Missing)).unwrap();
        let aug = augment_with_anchors(&data, &column_set(), 4.0, &AnchorSelection::All).unwrap();
        assert_eq!(aug.data.n_units(), 7);
        assert_eq!(aug.mask.n_synthetic(), 4);
        assert!(aug.duplicates.is_empty());
    }

    #[test]
    fn duplicate_respondent_is_pinned() {
        use Response::*;
        // unit 0 answers exactly like the positive anchor of dimension 0
        let values = Array2::from_shape_vec(
            (2, 4),
            vec![Yes, No, Yes, No, No, No, Yes, Yes],
        )
        .unwrap();
        let data = ResponseMatrix::from_values(values).unwrap();
        let aug =
            augment_with_anchors(&data, &column_set(), 4.0, &AnchorSelection::Dims(vec![0])).unwrap();
        assert_eq!(aug.duplicates.len(), 1);
        assert_eq!(aug.duplicates[0].unit, 0);
        assert_eq!(aug.mask.fixed(0), &[Some(4.0), None]);
        assert!(!aug.mask.has_fixed(1));
    }

    #[test]
    fn empty_selection_is_identity() {
        let data = ResponseMatrix::from_values(Array2::from_elem((3, 4), Response::Yes)).unwrap();
        let aug =
            augment_with_anchors(&data, &column_set(), 4.0, &AnchorSelection::Dims(vec![])).unwrap();
        assert_eq!(aug.data, data);
        assert_eq!(aug.mask.n_synthetic(), 0);
    }

    #[test]
    fn explicit_unanchorable_dimension_errors() {
        let codes = Array2::from_shape_vec((2, 2), vec![Some(1.0), Some(0.0), None, None]).unwrap();
        let c = ConstraintSet::from_codes(codes).unwrap();
        let data = ResponseMatrix::from_values(Array2::from_elem((2, 2), Response::Yes)).unwrap();
        assert!(augment_with_anchors(&data, &c, 4.0, &AnchorSelection::All).is_ok());
        assert!(matches!(
            augment_with_anchors(&data, &c, 4.0, &AnchorSelection::Dims(vec![1])),
            Err(IrtmError::AnchorUnavailable { .. })
        ));
    }
}
