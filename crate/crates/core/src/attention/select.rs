//! Index selection and the page-group load / filter pair used by dual-step loading.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Which axis of a head's K/V operands a selection indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Embedding,
    Token,
}

/// Ranking key for [`argtopk`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopKKey {
    Magnitude,
    Raw,
}

/// Strictly increasing set of selected indices along one axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMask {
    pub axis: Axis,
    pub selected: Vec<usize>,
    /// Length of the indexed axis.
    pub extent: usize,
}

impl SelectionMask {
    pub fn new(axis: Axis, selected: Vec<usize>, extent: usize) -> Result<Self> {
        if selected.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invariant("selection indices not strictly increasing".into()));
        }
        if let Some(&last) = selected.last() {
            if last >= extent {
                return Err(Error::Invariant(format!(
                    "selected index {last} outside axis of length {extent}"
                )));
            }
        }
        Ok(Self {
            axis,
            selected,
            extent,
        })
    }

    /// Every index along the axis.
    pub fn full(axis: Axis, extent: usize) -> Self {
        Self {
            axis,
            selected: (0..extent).collect(),
            extent,
        }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Indices of the `count` largest entries under `key`, returned in increasing index order.
///
/// Ties resolve toward the lower index, so the result is a pure function of the input.
pub fn argtopk(values: &[f64], count: usize, key: TopKKey, axis: Axis) -> Result<SelectionMask> {
    if count == 0 || count > values.len() {
        return Err(Error::config(format!(
            "argtopk count {count} outside [1, {}]",
            values.len()
        )));
    }
    let score = |i: usize| match key {
        TopKKey::Magnitude => values[i].abs(),
        TopKKey::Raw => values[i],
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    if count < values.len() {
        order.select_nth_unstable_by(count - 1, |&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
        order.truncate(count);
    }
    order.sort_unstable();
    SelectionMask::new(axis, order, values.len())
}

/// Group ids that contain at least one selected index; the first-step (page) load set.
pub fn group_expand(mask: &SelectionMask, group: usize) -> Result<Vec<usize>> {
    if group == 0 {
        return Err(Error::config("group size must be >= 1"));
    }
    let mut groups: Vec<usize> = mask.selected.iter().map(|&i| i / group).collect();
    groups.dedup();
    Ok(groups)
}

/// Number of groups covering an axis of `extent` entries.
pub fn group_count(extent: usize, group: usize) -> usize {
    extent.div_ceil(group)
}

/// Rows fetched at group (page) granularity, keyed by group id.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedGroups {
    pub group_size: usize,
    pub row_len: usize,
    pub groups: BTreeMap<usize, Matrix>,
}

impl LoadedGroups {
    pub fn rows_loaded(&self) -> usize {
        self.groups.values().map(Matrix::rows).sum()
    }
}

/// Fetches whole groups of rows of `source`, the way a page read returns every row it holds.
pub fn load_groups(source: &Matrix, groups: &[usize], group_size: usize) -> Result<LoadedGroups> {
    if group_size == 0 {
        return Err(Error::config("group size must be >= 1"));
    }
    let mut loaded = BTreeMap::new();
    for &g in groups {
        let start = g * group_size;
        if start >= source.rows() {
            return Err(Error::Mapping(format!("group {g} beyond {} rows", source.rows())));
        }
        let end = (start + group_size).min(source.rows());
        let idx: Vec<usize> = (start..end).collect();
        loaded.insert(g, source.gather_rows(&idx));
    }
    Ok(LoadedGroups {
        group_size,
        row_len: source.cols(),
        groups: loaded,
    })
}

/// Second-step filter: keeps exactly the selected rows, packed in index order.
pub fn filter_groups(loaded: &LoadedGroups, mask: &SelectionMask) -> Result<Matrix> {
    let mut out = Vec::with_capacity(mask.len() * loaded.row_len);
    for &i in &mask.selected {
        let g = i / loaded.group_size;
        let page = loaded
            .groups
            .get(&g)
            .ok_or_else(|| Error::Invariant(format!("group {g} for index {i} was not loaded")))?;
        let offset = i - g * loaded.group_size;
        if offset >= page.rows() {
            return Err(Error::Invariant(format!("index {i} outside loaded group {g}")));
        }
        out.extend_from_slice(page.row(offset));
    }
    Matrix::from_vec(mask.len(), loaded.row_len, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::NormalSource;

    fn mask(sel: &[usize], extent: usize) -> SelectionMask {
        SelectionMask::new(Axis::Token, sel.to_vec(), extent).unwrap()
    }

    #[test]
    fn argtopk_by_magnitude() {
        let m = argtopk(&[0.5, -2.0, 1.0, 0.25], 2, TopKKey::Magnitude, Axis::Embedding).unwrap();
        assert_eq!(m.selected, vec![1, 2]);
    }

    #[test]
    fn argtopk_tie_goes_to_lower_index() {
        let m = argtopk(&[3.0, 3.0, 1.0], 1, TopKKey::Raw, Axis::Token).unwrap();
        assert_eq!(m.selected, vec![0]);
        let m = argtopk(&[1.0, 2.0, 2.0, 2.0], 2, TopKKey::Raw, Axis::Token).unwrap();
        assert_eq!(m.selected, vec![1, 2]);
    }

    #[test]
    fn argtopk_full_and_out_of_range() {
        let m = argtopk(&[1.0, 5.0, 2.0], 3, TopKKey::Raw, Axis::Token).unwrap();
        assert_eq!(m.selected, vec![0, 1, 2]);
        assert!(argtopk(&[1.0, 2.0], 0, TopKKey::Raw, Axis::Token).is_err());
        assert!(argtopk(&[1.0, 2.0], 3, TopKKey::Raw, Axis::Token).is_err());
    }

    #[test]
    fn mask_rejects_unsorted_and_out_of_bounds() {
        assert!(SelectionMask::new(Axis::Token, vec![2, 1], 4).is_err());
        assert!(SelectionMask::new(Axis::Token, vec![1, 1], 4).is_err());
        assert!(SelectionMask::new(Axis::Token, vec![4], 4).is_err());
    }

    #[test]
    fn group_expand_examples() {
        assert_eq!(group_expand(&mask(&[3, 17], 32), 16).unwrap(), vec![0, 1]);
        assert_eq!(group_expand(&mask(&[3, 17], 32), 1).unwrap(), vec![3, 17]);
        let all: Vec<usize> = (0..16).collect();
        assert_eq!(group_expand(&mask(&all, 16), 16).unwrap(), vec![0]);
        assert!(group_expand(&mask(&[0], 4), 0).is_err());
    }

    #[test]
    fn filter_keeps_selected_rows() {
        let mut src = NormalSource::new(3);
        let data = src.matrix(32, 4);
        let m = mask(&[3, 17], 32);
        let loaded = load_groups(&data, &group_expand(&m, 16).unwrap(), 16).unwrap();
        assert_eq!(loaded.groups.len(), 2);
        let out = filter_groups(&loaded, &m).unwrap();
        assert_eq!(out.rows(), 2);
        assert_eq!(out.row(0), data.row(3));
        assert_eq!(out.row(1), data.row(17));
    }

    #[test]
    fn full_group_passes_through() {
        let mut src = NormalSource::new(4);
        let data = src.matrix(16, 3);
        let m = SelectionMask::full(Axis::Token, 16);
        let loaded = load_groups(&data, &[0], 16).unwrap();
        assert_eq!(filter_groups(&loaded, &m).unwrap(), data);
    }

    #[test]
    fn missing_group_is_an_error() {
        let mut src = NormalSource::new(5);
        let data = src.matrix(32, 2);
        let loaded = load_groups(&data, &[0], 16).unwrap();
        assert!(matches!(
            filter_groups(&loaded, &mask(&[20], 32)),
            Err(Error::Invariant(_))
        ));
    }
}
