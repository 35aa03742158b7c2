use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::AttackSpec;
use crate::error::{Error, Result};
use crate::graph::CooccurrenceStore;

/// Rows scaled to unit length; zero rows stay zero, which puts them at
/// cosine distance 1 from everything.
fn unit_rows(w: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = w.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// Cosine distances from row `i` to every row.
fn distances_from(unit: &Array2<f64>, i: usize) -> Array1<f64> {
    unit.dot(&unit.row(i)).mapv(|c| 1.0 - c)
}

fn by_distance_then_id(d: &Array1<f64>) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b))
}

/// The `k` rows closest to row `i` by cosine distance, excluding `i`,
/// nearest first with ties broken by ascending id.
pub fn topk_neighbors(w: ArrayView2<'_, f64>, i: usize, k: usize) -> Result<Vec<usize>> {
    let n = w.nrows();
    if i >= n {
        return Err(Error::Dimension(format!("row {i} outside {n} rows")));
    }
    if k >= n {
        return Err(Error::Config(format!(
            "k = {k} must be below the row count {n}"
        )));
    }
    if w.row(i).iter().all(|&v| v == 0.0) {
        return Err(Error::Undefined(format!(
            "row {i} is zero; cosine distance undefined"
        )));
    }
    let unit = unit_rows(w);
    let d = distances_from(&unit, i);
    let mut ids: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    ids.sort_by(by_distance_then_id(&d));
    ids.truncate(k);
    Ok(ids)
}

/// 1-based position of `j` in row `i`'s full neighbour ordering.
pub fn rank_of(w: ArrayView2<'_, f64>, i: usize, j: usize) -> Result<usize> {
    let n = w.nrows();
    if i >= n || j >= n || i == j {
        return Err(Error::Dimension(format!(
            "invalid pair ({i}, {j}) for {n} rows"
        )));
    }
    let unit = unit_rows(w);
    Ok(rank_in(&distances_from(&unit, i), i, j))
}

fn rank_in(d: &Array1<f64>, i: usize, j: usize) -> usize {
    let cmp = by_distance_then_id(d);
    1 + (0..d.len())
        .filter(|&k| k != i && cmp(&k, &j) == Ordering::Less)
        .count()
}

/// Number of influence items among the `k` nearest neighbours of the target.
pub fn attacked_in_top_k(w: ArrayView2<'_, f64>, spec: &AttackSpec, k: usize) -> Result<usize> {
    let top = topk_neighbors(w, spec.target, k)?;
    Ok(top.iter().filter(|i| spec.influence.contains(i)).count())
}

/// Each node's strongest co-occurrence partner, ties to the smaller id.
/// Nodes with no co-occurrence map to `None`.
pub fn cooccurrence_nn(cooc: &CooccurrenceStore) -> Vec<Option<usize>> {
    let mut best: Vec<Option<(f64, usize)>> = vec![None; cooc.node_count()];
    let mut offer = |i: u32, j: u32, c: f64| {
        let slot = &mut best[i as usize];
        let better = match *slot {
            None => true,
            Some((bc, bj)) => c > bc || (c == bc && (j as usize) < bj),
        };
        if better {
            *slot = Some((c, j as usize));
        }
    };
    for &(i, j, c) in cooc.entries() {
        offer(i, j, c);
        if cooc.is_symmetric() {
            offer(j, i, c);
        }
    }
    let isolated = best.iter().filter(|b| b.is_none()).count();
    if isolated > 0 {
        log::warn!("{isolated} nodes have no co-occurrences and are excluded from retrieval");
    }
    best.into_iter().map(|b| b.map(|(_, j)| j)).collect()
}

/// Mean over nodes with a co-occurrence neighbour of `1 / rank_i(NN(i))`.
pub fn mrr(w: ArrayView2<'_, f64>, nn: &[Option<usize>]) -> Result<f64> {
    let n = w.nrows();
    if nn.len() != n {
        return Err(Error::Dimension(format!(
            "{} neighbours for {n} rows",
            nn.len()
        )));
    }
    let unit = unit_rows(w);
    let gram = unit.dot(&unit.t());
    let (mut total, mut count) = (0.0, 0usize);
    for (i, target) in nn.iter().enumerate() {
        let Some(j) = *target else { continue };
        if j >= n || j == i {
            return Err(Error::Dimension(format!(
                "neighbour {j} invalid for row {i}"
            )));
        }
        let d = gram.row(i).mapv(|c| 1.0 - c);
        total += 1.0 / rank_in(&d, i, j) as f64;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("no node has a co-occurrence neighbour".into()));
    }
    Ok(total / count as f64)
}

/// `sum_{m_i > 0} m_i W_i - sum_{m_i = 0} W_i`.
pub fn attack_direction(w: ArrayView2<'_, f64>, m: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if m.len() != w.nrows() {
        return Err(Error::Dimension(format!(
            "{} metadata rows for {} embedding rows",
            m.len(),
            w.nrows()
        )));
    }
    if !m.iter().any(|&v| v > 0.0) {
        return Err(Error::Undefined("no item has a known attacker".into()));
    }
    let mut dir = Array1::zeros(w.ncols());
    for (row, &mi) in w.rows().into_iter().zip(m) {
        let weight = if mi > 0.0 { mi } else { -1.0 };
        dir.scaled_add(weight, &row);
    }
    Ok(dir)
}

/// Removes from every row its component along `direction`.
pub fn nlp_debias(w: ArrayView2<'_, f64>, direction: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
    if direction.len() != w.ncols() {
        return Err(Error::Dimension(format!(
            "direction of length {} for {} columns",
            direction.len(),
            w.ncols()
        )));
    }
    let norm = direction.dot(&direction).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Undefined("zero attack direction".into()));
    }
    let unit = &direction / norm;
    let coef = w.dot(&unit);
    let mut out = w.to_owned();
    for (mut row, c) in out.rows_mut().into_iter().zip(coef) {
        row.scaled_add(-c, &unit);
    }
    Ok(out)
}
