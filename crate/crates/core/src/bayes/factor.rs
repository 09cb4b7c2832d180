//! Dense factor tables over discrete variables.
//!
//! Values are stored row-major: the last variable in the scope varies
//! fastest. A conditional probability table therefore lists its parents
//! first and the child last.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{InferenceError, VarId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorTable {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl FactorTable {
    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self, InferenceError> {
        if scope.len() != cards.len() {
            return Err(InferenceError::Malformed(format!(
                "scope has {} variables but {} cardinalities",
                scope.len(),
                cards.len()
            )));
        }
        for (i, v) in scope.iter().enumerate() {
            if scope[..i].contains(v) {
                return Err(InferenceError::Malformed(format!("variable {v} repeated in scope")));
            }
        }
        if cards.contains(&0) {
            return Err(InferenceError::Malformed("zero cardinality in scope".into()));
        }
        let expected: usize = cards.iter().product();
        if values.len() != expected {
            return Err(InferenceError::Malformed(format!(
                "table has {} entries, scope requires {expected}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(InferenceError::Malformed(format!("invalid table entry {bad}")));
        }
        Ok(Self { scope, cards, values })
    }

    /// Factor over the empty scope holding a single value.
    pub fn constant(value: f64) -> Self {
        Self { scope: Vec::new(), cards: Vec::new(), values: vec![value] }
    }

    pub fn ones(scope: Vec<VarId>, cards: Vec<usize>) -> Self {
        let n = cards.iter().product();
        Self { scope, cards, values: vec![1.0; n] }
    }

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.scope.contains(&var)
    }

    pub fn card_of(&self, var: VarId) -> Option<usize> {
        self.position(var).map(|p| self.cards[p])
    }

    fn position(&self, var: VarId) -> Option<usize> {
        self.scope.iter().position(|&v| v == var)
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.cards.len()];
        for k in (0..self.cards.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.cards[k + 1];
        }
        strides
    }

    /// Strides of this factor laid out along `dims` (0 for absent variables).
    fn strides_along(&self, dims: &[VarId]) -> Vec<usize> {
        let own = self.strides();
        dims.iter()
            .map(|v| self.position(*v).map_or(0, |p| own[p]))
            .collect()
    }

    /// Linear index of an assignment given in scope order.
    pub fn index_of(&self, assignment: &[usize]) -> usize {
        debug_assert_eq!(assignment.len(), self.scope.len());
        assignment
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&a, &c)| acc * c + a)
    }

    pub fn get(&self, assignment: &[usize]) -> f64 {
        self.values[self.index_of(assignment)]
    }

    /// Value at a full assignment keyed by variable id.
    pub fn value_at(&self, assignment: &BTreeMap<VarId, usize>) -> Option<f64> {
        let mut idx = 0;
        for (v, c) in self.scope.iter().zip(&self.cards) {
            let a = *assignment.get(v)?;
            if a >= *c {
                return None;
            }
            idx = idx * c + a;
        }
        Some(self.values[idx])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Divides by the table total and returns the total. Leaves an all-zero
    /// table untouched.
    pub fn normalize(&mut self) -> f64 {
        let total = self.total();
        if total > 0.0 {
            self.scale(1.0 / total);
        }
        total
    }

    pub fn product(&self, other: &FactorTable) -> FactorTable {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (v, c) in other.scope.iter().zip(&other.cards) {
            if !scope.contains(v) {
                scope.push(*v);
                cards.push(*c);
            }
        }
        let sa = self.strides_along(&scope);
        let sb = other.strides_along(&scope);
        let n: usize = cards.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut counter = vec![0usize; scope.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..n {
            values.push(self.values[ia] * other.values[ib]);
            for k in (0..scope.len()).rev() {
                counter[k] += 1;
                ia += sa[k];
                ib += sb[k];
                if counter[k] < cards[k] {
                    break;
                }
                ia -= sa[k] * cards[k];
                ib -= sb[k] * cards[k];
                counter[k] = 0;
            }
        }
        FactorTable { scope, cards, values }
    }

    /// Product of a list of factors; the empty product is the constant 1.
    pub fn product_all<'a>(factors: impl IntoIterator<Item = &'a FactorTable>) -> FactorTable {
        factors
            .into_iter()
            .fold(FactorTable::constant(1.0), |acc, f| acc.product(f))
    }

    /// Visits every input entry alongside the index of the output cell it
    /// folds into once `var` is removed.
    fn fold_out(&self, var: VarId, mut visit: impl FnMut(usize, f64)) -> (Vec<VarId>, Vec<usize>) {
        let p = self.position(var).expect("variable not in scope");
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(p);
        cards.remove(p);
        let out = FactorTable::ones(scope.clone(), cards.clone());
        let so = out.strides_along(&self.scope);
        let mut counter = vec![0usize; self.scope.len()];
        let mut io = 0usize;
        for &value in &self.values {
            visit(io, value);
            for k in (0..self.scope.len()).rev() {
                counter[k] += 1;
                io += so[k];
                if counter[k] < self.cards[k] {
                    break;
                }
                io -= so[k] * self.cards[k];
                counter[k] = 0;
            }
        }
        (scope, cards)
    }

    pub fn sum_out(&self, var: VarId) -> FactorTable {
        let n = self.len() / self.card_of(var).expect("variable not in scope");
        let mut values = vec![0.0; n];
        let (scope, cards) = self.fold_out(var, |o, v| values[o] += v);
        FactorTable { scope, cards, values }
    }

    /// Weighted power sum `(sum_x f(x)^(1/w))^w`; `w = 1` is the ordinary sum.
    pub fn power_sum_out(&self, var: VarId, weight: f64) -> FactorTable {
        assert!(weight > 0.0 && weight <= 1.0, "power-sum weight must lie in (0, 1]");
        if weight == 1.0 {
            return self.sum_out(var);
        }
        let m = self.max_value();
        let n = self.len() / self.card_of(var).expect("variable not in scope");
        let mut values = vec![0.0; n];
        if m == 0.0 {
            let (scope, cards) = self.fold_out(var, |_, _| {});
            return FactorTable { scope, cards, values };
        }
        let inv = 1.0 / weight;
        let (scope, cards) = self.fold_out(var, |o, v| values[o] += (v / m).powf(inv));
        for v in &mut values {
            *v = m * v.powf(weight);
        }
        FactorTable { scope, cards, values }
    }

    /// Fixes every evidenced variable in the scope and drops it.
    pub fn restrict(&self, evidence: &BTreeMap<VarId, usize>) -> FactorTable {
        let strides = self.strides();
        let mut base = 0usize;
        let mut scope = Vec::new();
        let mut cards = Vec::new();
        let mut in_strides = Vec::new();
        for (k, v) in self.scope.iter().enumerate() {
            match evidence.get(v) {
                Some(&val) => base += val * strides[k],
                None => {
                    scope.push(*v);
                    cards.push(self.cards[k]);
                    in_strides.push(strides[k]);
                }
            }
        }
        if scope.len() == self.scope.len() {
            return self.clone();
        }
        let n: usize = cards.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut counter = vec![0usize; scope.len()];
        let mut ii = base;
        for _ in 0..n {
            values.push(self.values[ii]);
            for k in (0..scope.len()).rev() {
                counter[k] += 1;
                ii += in_strides[k];
                if counter[k] < cards[k] {
                    break;
                }
                ii -= in_strides[k] * cards[k];
                counter[k] = 0;
            }
        }
        FactorTable { scope, cards, values }
    }

    /// Same table with the scope permuted into `order`, which must be a
    /// permutation of the current scope.
    pub fn reorder(&self, order: &[VarId]) -> FactorTable {
        assert_eq!(order.len(), self.scope.len(), "reorder needs a permutation of the scope");
        let cards: Vec<usize> = order
            .iter()
            .map(|v| self.card_of(*v).expect("reorder needs a permutation of the scope"))
            .collect();
        let si = self.strides_along(order);
        let n = self.len();
        let mut values = Vec::with_capacity(n);
        let mut counter = vec![0usize; order.len()];
        let mut ii = 0usize;
        for _ in 0..n {
            values.push(self.values[ii]);
            for k in (0..order.len()).rev() {
                counter[k] += 1;
                ii += si[k];
                if counter[k] < cards[k] {
                    break;
                }
                ii -= si[k] * cards[k];
                counter[k] = 0;
            }
        }
        FactorTable { scope: order.to_vec(), cards, values }
    }

    /// Marginal onto `keep` (in the given order), summing out everything else.
    pub fn marginal(&self, keep: &[VarId]) -> FactorTable {
        let mut f = self.clone();
        for v in self.scope.iter().filter(|v| !keep.contains(v)) {
            f = f.sum_out(*v);
        }
        f.reorder(keep)
    }

    /// Sums over the last scope variable for each assignment of the others.
    pub(crate) fn child_row_sums(&self) -> Vec<f64> {
        match self.cards.last() {
            None => vec![self.values[0]],
            Some(&c) => self.values.chunks(c).map(|row| row.iter().sum()).collect(),
        }
    }

    /// All assignments of the scope in table order.
    pub fn assignments(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        AssignmentIter::new(self.cards.clone())
    }
}

/// Odometer over the cross product of `0..cards[k]`, last position fastest.
pub struct AssignmentIter {
    cards: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl AssignmentIter {
    pub fn new(cards: Vec<usize>) -> Self {
        let next = if cards.contains(&0) { None } else { Some(vec![0; cards.len()]) };
        Self { cards, next }
    }
}

impl Iterator for AssignmentIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut done = true;
        for k in (0..succ.len()).rev() {
            succ[k] += 1;
            if succ[k] < self.cards[k] {
                done = false;
                break;
            }
            succ[k] = 0;
        }
        if !done {
            self.next = Some(succ);
        }
        Some(current)
    }
}
