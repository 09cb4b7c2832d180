//! Bucket elimination over plain factor lists.
//!
//! The same routine serves exact inference and weighted mini-bucket
//! elimination: a bucket whose combined scope exceeds the i-bound is split
//! into mini-buckets, each eliminated with a uniform-weight power sum
//! (Hölder weights `1/r` for `r` mini-buckets). Unsplit buckets use the
//! ordinary sum, so the two paths coincide whenever no split happens.

use std::collections::{BTreeMap, BTreeSet};

use super::{FactorTable, InferenceError, VarId};

type Graph = BTreeMap<VarId, BTreeSet<VarId>>;

fn interaction_graph<'a>(scopes: impl IntoIterator<Item = &'a [VarId]>) -> Graph {
    let mut g: Graph = BTreeMap::new();
    for scope in scopes {
        for &a in scope {
            let entry = g.entry(a).or_default();
            entry.extend(scope.iter().copied().filter(|&b| b != a));
        }
    }
    g
}

fn fill_count(g: &Graph, v: VarId) -> usize {
    let nbrs: Vec<VarId> = g[&v].iter().copied().collect();
    let mut fill = 0;
    for (i, a) in nbrs.iter().enumerate() {
        for b in &nbrs[i + 1..] {
            if !g[a].contains(b) {
                fill += 1;
            }
        }
    }
    fill
}

fn eliminate_node(g: &mut Graph, v: VarId) -> usize {
    let nbrs: Vec<VarId> = g.remove(&v).unwrap_or_default().into_iter().collect();
    let mut added = 0;
    for (i, &a) in nbrs.iter().enumerate() {
        g.get_mut(&a).unwrap().remove(&v);
        for &b in &nbrs[i + 1..] {
            if g.get_mut(&a).unwrap().insert(b) {
                g.get_mut(&b).unwrap().insert(a);
                added += 1;
            }
        }
    }
    added
}

/// Greedy min-fill ordering of `eliminate`, ties broken by smallest id.
/// Variables present in the scopes but not in `eliminate` stay in the graph.
pub(crate) fn min_fill_order<'a>(
    scopes: impl IntoIterator<Item = &'a [VarId]>,
    eliminate: &BTreeSet<VarId>,
) -> Vec<VarId> {
    let mut g = interaction_graph(scopes);
    for &v in eliminate {
        g.entry(v).or_default();
    }
    let mut remaining = eliminate.clone();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best = remaining
            .iter()
            .copied()
            .min_by_key(|&v| (fill_count(&g, v), v))
            .unwrap();
        eliminate_node(&mut g, best);
        remaining.remove(&best);
        order.push(best);
    }
    order
}

/// Number of fill edges each step of `order` introduces.
pub(crate) fn fill_edges_per_step<'a>(
    scopes: impl IntoIterator<Item = &'a [VarId]>,
    order: &[VarId],
) -> Vec<usize> {
    let mut g = interaction_graph(scopes);
    order
        .iter()
        .map(|&v| {
            g.entry(v).or_default();
            eliminate_node(&mut g, v)
        })
        .collect()
}

/// Largest bucket scope (eliminated variable plus its neighbours) along `order`.
pub(crate) fn max_bucket_scope<'a>(
    scopes: impl IntoIterator<Item = &'a [VarId]>,
    order: &[VarId],
) -> usize {
    let mut g = interaction_graph(scopes);
    let mut widest = 0;
    for &v in order {
        let size = g.get(&v).map_or(0, |n| n.len()) + 1;
        widest = widest.max(size);
        g.entry(v).or_default();
        eliminate_node(&mut g, v);
    }
    widest
}

/// Splits a bucket greedily: largest scopes first, each factor joins the first
/// mini-bucket whose merged scope stays within `ibound`.
fn partition(bucket: Vec<FactorTable>, ibound: usize) -> Vec<Vec<FactorTable>> {
    let mut indexed: Vec<(usize, FactorTable)> = bucket.into_iter().enumerate().collect();
    indexed.sort_by_key(|(i, f)| (std::cmp::Reverse(f.scope().len()), *i));
    let mut groups: Vec<(BTreeSet<VarId>, Vec<FactorTable>)> = Vec::new();
    for (_, f) in indexed {
        let slot = groups.iter().position(|(scope, _)| {
            let merged = scope.union(&f.scope().iter().copied().collect()).count();
            merged <= ibound
        });
        match slot {
            Some(k) => {
                groups[k].0.extend(f.scope().iter().copied());
                groups[k].1.push(f);
            }
            None => groups.push((f.scope().iter().copied().collect(), vec![f])),
        }
    }
    groups.into_iter().map(|(_, fs)| fs).collect()
}

/// Output of [`eliminate`]: the factors left after elimination plus the log
/// of the normalisation constants divided out of each message.
pub(crate) struct Eliminated {
    pub factors: Vec<FactorTable>,
    pub log_scale: f64,
}

pub(crate) fn eliminate(
    mut pool: Vec<FactorTable>,
    order: &[VarId],
    ibound: Option<usize>,
) -> Result<Eliminated, InferenceError> {
    let mut log_scale = 0.0;
    for &var in order {
        let (bucket, rest): (Vec<_>, Vec<_>) = pool.into_iter().partition(|f| f.contains(var));
        pool = rest;
        if bucket.is_empty() {
            continue;
        }
        let scope_size = bucket
            .iter()
            .flat_map(|f| f.scope().iter().copied())
            .collect::<BTreeSet<_>>()
            .len();
        let messages = match ibound {
            Some(bound) if scope_size > bound => {
                let groups = partition(bucket, bound);
                let weight = 1.0 / groups.len() as f64;
                groups
                    .iter()
                    .map(|g| FactorTable::product_all(g).power_sum_out(var, weight))
                    .collect::<Vec<_>>()
            }
            _ => vec![FactorTable::product_all(&bucket).sum_out(var)],
        };
        for mut m in messages {
            let total = m.normalize();
            if total == 0.0 {
                return Err(InferenceError::ZeroProbabilityEvidence);
            }
            log_scale += total.ln();
            pool.push(m);
        }
    }
    Ok(Eliminated { factors: pool, log_scale })
}

/// Sums every variable outside `keep` out of the product of `factors`.
/// Returns the unnormalised table over `keep` (in that order) and the log
/// of the constants divided out along the way.
pub(crate) fn sum_product(
    factors: Vec<FactorTable>,
    keep: &[(VarId, usize)],
) -> Result<(FactorTable, f64), InferenceError> {
    let keep_ids: Vec<VarId> = keep.iter().map(|(v, _)| *v).collect();
    let elim: BTreeSet<VarId> = factors
        .iter()
        .flat_map(|f| f.scope().iter().copied())
        .filter(|v| !keep_ids.contains(v))
        .collect();
    let order = min_fill_order(factors.iter().map(|f| f.scope()), &elim);
    let out = eliminate(factors, &order, None)?;
    let mut joint = FactorTable::product_all(&out.factors);
    for &(v, card) in keep {
        if !joint.contains(v) {
            joint = joint.product(&FactorTable::ones(vec![v], vec![card]));
        }
    }
    Ok((joint.reorder(&keep_ids), out.log_scale))
}
