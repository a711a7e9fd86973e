//! AIC model selection over a grid of per-group profile degrees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::estimation::fit;

/// Default absolute AIC difference treated as a tie.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub degrees: Vec<usize>,
    pub aic: f64,
    pub n_params: usize,
    pub rmss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidCell {
    pub degrees: Vec<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub group_labels: Vec<String>,
    /// Fitted cells in lexicographic degree order.
    pub grid: Vec<GridCell>,
    pub invalid: Vec<InvalidCell>,
    pub best: Vec<usize>,
    /// Cells whose AIC is within the tie tolerance of the minimum, in
    /// preference order (best first).
    pub ties: Vec<Vec<usize>>,
}

impl SelectionResult {
    pub fn best_cell(&self) -> &GridCell {
        self.grid.iter().find(|c| c.degrees == self.best).expect("best is a grid cell")
    }

    pub fn cell(&self, degrees: &[usize]) -> Option<&GridCell> {
        self.grid.iter().find(|c| c.degrees == degrees)
    }
}

/// Cross product of `1..=max` per group, in lexicographic order.
pub fn degree_grid(max_degrees: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &m in max_degrees {
        out = out.into_iter().flat_map(|prefix| (1..=m).map(move |d| [prefix.clone(), vec![d]].concat())).collect();
    }
    if max_degrees.is_empty() {
        return Vec::new();
    }
    out
}

/// Picks the preferred cell: minimal AIC, ties (within `tie_tol`) broken by
/// fewer parameters, then by lexicographically smaller degrees. The result
/// does not depend on the order of `cells`.
pub fn choose(cells: &[GridCell], tie_tol: f64) -> Option<(Vec<usize>, Vec<Vec<usize>>)> {
    let min = cells.iter().map(|c| c.aic).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let mut tied: Vec<&GridCell> = cells.iter().filter(|c| c.aic - min <= tie_tol).collect();
    tied.sort_by(|a, b| a.n_params.cmp(&b.n_params).then_with(|| a.degrees.cmp(&b.degrees)));
    let ties: Vec<Vec<usize>> = tied.iter().map(|c| c.degrees.clone()).collect();
    Some((ties[0].clone(), ties))
}

pub fn select_degrees(data: &LongitudinalDataset, max_degrees: &[usize]) -> Result<SelectionResult> {
    select_degrees_with_tol(data, max_degrees, DEFAULT_TIE_TOL)
}

pub fn select_degrees_with_tol(data: &LongitudinalDataset, max_degrees: &[usize], tie_tol: f64) -> Result<SelectionResult> {
    if max_degrees.len() != data.groups.len() {
        return Err(Error::InvalidArgument(format!(
            "{} maximum degrees given for {} groups",
            max_degrees.len(),
            data.groups.len()
        )));
    }
    if max_degrees.contains(&0) {
        return Err(Error::InvalidArgument("maximum degrees must be at least 1".into()));
    }
    let grid = degree_grid(max_degrees);
    let outcomes: Vec<std::result::Result<GridCell, InvalidCell>> = grid
        .into_par_iter()
        .map(|degrees| {
            let attempt = data.spec(&degrees).and_then(|spec| fit(&data.y, &spec));
            match attempt {
                Ok(f) => Ok(GridCell { degrees, aic: f.aic, n_params: f.n_params, rmss: f.rmss }),
                Err(e) => Err(InvalidCell { degrees, error: e.to_string() }),
            }
        })
        .collect();
    let mut cells = Vec::new();
    let mut invalid = Vec::new();
    for o in outcomes {
        match o {
            Ok(c) => cells.push(c),
            Err(c) => invalid.push(c),
        }
    }
    let (best, ties) = choose(&cells, tie_tol).ok_or(Error::EmptyGrid)?;
    Ok(SelectionResult {
        group_labels: data.group_labels().iter().map(|s| s.to_string()).collect(),
        grid: cells,
        invalid,
        best,
        ties,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dental_dataset;
    use proptest::prelude::*;

    fn cell(degrees: &[usize], aic: f64, n_params: usize) -> GridCell {
        GridCell { degrees: degrees.to_vec(), aic, n_params, rmss: 1.0 }
    }

    #[test]
    fn grid_order() {
        assert_eq!(degree_grid(&[2, 3]), vec![vec![1, 1], vec![1, 2], vec![1, 3], vec![2, 1], vec![2, 2], vec![2, 3]]);
        assert!(degree_grid(&[]).is_empty());
    }

    #[test]
    fn tie_break_by_params_then_lexicographic() {
        let cells = [cell(&[2, 1], 5.0, 5), cell(&[1, 2], 5.0, 5), cell(&[3, 3], 5.0, 8), cell(&[1, 1], 6.0, 4)];
        let (best, ties) = choose(&cells, 0.0).unwrap();
        assert_eq!(best, vec![1, 2]);
        assert_eq!(ties, vec![vec![1, 2], vec![2, 1], vec![3, 3]]);
        let cells = [cell(&[2, 2], 5.0, 6), cell(&[1, 3], 5.0 + 1e-12, 6), cell(&[1, 1], 5.0 + 1e-12, 4)];
        assert_eq!(choose(&cells, 1e-9).unwrap().0, vec![1, 1]);
        assert_eq!(choose(&cells, 0.0).unwrap().0, vec![2, 2]);
    }

    #[test]
    fn dental_grid_is_complete() {
        let r = select_degrees(&dental_dataset(), &[3, 3]).unwrap();
        assert_eq!(r.grid.len(), 9);
        assert!(r.invalid.is_empty());
        assert_eq!(r.best, vec![1, 1]);
        assert!(r.grid.iter().all(|c| c.aic >= r.best_cell().aic));
    }

    #[test]
    fn invalid_cells_recorded() {
        // q = 5 > p = 4 for degree 4.
        let r = select_degrees(&dental_dataset(), &[4, 1]).unwrap();
        assert_eq!(r.grid.len(), 3);
        assert_eq!(r.invalid.len(), 1);
        assert_eq!(r.invalid[0].degrees, vec![4, 1]);
    }

    #[test]
    fn all_invalid_is_empty_grid() {
        let d = crate::data::read_csv("group,1,2,3,4\na,1,2,3,4\nb,2,3,4,6\n".as_bytes(), &Default::default()).unwrap();
        assert!(matches!(select_degrees(&d, &[1, 1]), Err(Error::EmptyGrid)));
    }

    proptest! {
        #[test]
        fn choice_ignores_enumeration_order(
            aics in proptest::collection::vec(0i32..4, 9),
            seed in any::<u64>(),
        ) {
            let grid = degree_grid(&[3, 3]);
            let cells: Vec<GridCell> = grid.iter().zip(&aics)
                .map(|(d, a)| cell(d, *a as f64, d.iter().map(|x| x + 1).sum()))
                .collect();
            let mut shuffled = cells.clone();
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = crate::simulation::rng::mix64(s);
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(choose(&cells, 0.0), choose(&shuffled, 0.0));
        }
    }
}
