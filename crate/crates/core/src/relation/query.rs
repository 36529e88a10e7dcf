use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ColumnRef, Database};
use crate::error::{Error, Result};

/// A one-dimensional ranged filter `relation.attribute <= bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub relation: String,
    pub attribute: String,
    pub bound: f64,
}

impl Selection {
    pub fn new(relation: impl Into<String>, attribute: impl Into<String>, bound: f64) -> Self {
        Self {
            relation: relation.into(),
            attribute: attribute.into(),
            bound,
        }
    }

    pub fn column(&self) -> ColumnRef {
        ColumnRef::new(&self.relation, &self.attribute)
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} <= {}", self.relation, self.attribute, self.bound)
    }
}

#[derive(Deserialize)]
struct RawJoin {
    left: ColumnRef,
    right: ColumnRef,
}

/// An equi-join predicate. Endpoints are stored in canonical (sorted) order so
/// that `R.a = S.b` and `S.b = R.a` compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "RawJoin")]
pub struct JoinPredicate {
    left: ColumnRef,
    right: ColumnRef,
}

impl From<RawJoin> for JoinPredicate {
    fn from(raw: RawJoin) -> Self {
        JoinPredicate::new(raw.left, raw.right)
    }
}

impl JoinPredicate {
    pub fn new(a: ColumnRef, b: ColumnRef) -> Self {
        if a <= b {
            Self { left: a, right: b }
        } else {
            Self { left: b, right: a }
        }
    }

    pub fn left(&self) -> &ColumnRef {
        &self.left
    }

    pub fn right(&self) -> &ColumnRef {
        &self.right
    }

    pub fn touches(&self, relation: &str) -> bool {
        self.left.relation == relation || self.right.relation == relation
    }

    /// The endpoint on `relation`, if any.
    pub fn side(&self, relation: &str) -> Option<&ColumnRef> {
        if self.left.relation == relation {
            Some(&self.left)
        } else if self.right.relation == relation {
            Some(&self.right)
        } else {
            None
        }
    }
}

impl fmt::Display for JoinPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.left, self.right)
    }
}

impl FromStr for JoinPredicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('=')
            .ok_or_else(|| Error::Schema(format!("expected `R.a = S.b`, got `{s}`")))?;
        Ok(JoinPredicate::new(a.parse()?, b.parse()?))
    }
}

/// A conjunctive select-join query: selections `rel.att <= v` and equi-joins.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuerySpec {
    pub relations: BTreeSet<String>,
    #[serde(default)]
    pub selections: Vec<Selection>,
    #[serde(default)]
    pub joins: Vec<JoinPredicate>,
}

impl QuerySpec {
    pub fn single(relation: impl Into<String>) -> Self {
        Self {
            relations: BTreeSet::from([relation.into()]),
            ..Default::default()
        }
    }

    /// Parses a query written as TOML:
    ///
    /// ```toml
    /// relations = ["R", "S"]
    /// selections = [{ relation = "R", attribute = "a", bound = 10.0 }]
    /// joins = [{ left = "R.id", right = "S.rid" }]
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("query", e.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn selections_on<'a>(&'a self, relation: &'a str) -> impl Iterator<Item = &'a Selection> {
        self.selections.iter().filter(move |s| s.relation == relation)
    }

    /// Checks the query against `db`: names resolve, at most one selection per
    /// attribute, joins link distinct member relations, join graph connected.
    pub fn validate(&self, db: &Database) -> Result<()> {
        if self.relations.is_empty() {
            return Err(Error::Schema("query references no relations".into()));
        }
        for name in &self.relations {
            db.relation(name)?;
        }
        let mut seen = BTreeSet::new();
        for sel in &self.selections {
            if !self.relations.contains(&sel.relation) {
                return Err(Error::Schema(format!(
                    "selection on `{}` which is not part of the query",
                    sel.relation
                )));
            }
            db.column(&sel.column())?;
            if !sel.bound.is_finite() {
                return Err(Error::Numeric("selection bound"));
            }
            if !seen.insert(sel.column()) {
                return Err(Error::Schema(format!("more than one selection on `{}`", sel.column())));
            }
        }
        for join in &self.joins {
            if join.left.relation == join.right.relation {
                return Err(Error::Schema(format!("join `{join}` is a self-join")));
            }
            for side in [&join.left, &join.right] {
                if !self.relations.contains(&side.relation) {
                    return Err(Error::Schema(format!(
                        "join `{join}` references `{}` which is not part of the query",
                        side.relation
                    )));
                }
                db.column(side)?;
            }
        }
        if !self.is_connected() {
            return Err(Error::Schema(
                "join graph is not connected; cross products are not supported".into(),
            ));
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let Some(start) = self.relations.iter().next() else {
            return true;
        };
        let mut reached = BTreeSet::from([start.as_str()]);
        let mut frontier = vec![start.as_str()];
        while let Some(rel) = frontier.pop() {
            for j in &self.joins {
                if let Some(other) = other_side(j, rel) {
                    if reached.insert(other) {
                        frontier.push(other);
                    }
                }
            }
        }
        reached.len() == self.relations.len()
    }
}

fn other_side<'a>(j: &'a JoinPredicate, rel: &str) -> Option<&'a str> {
    if j.left.relation == rel {
        Some(&j.right.relation)
    } else if j.right.relation == rel {
        Some(&j.left.relation)
    } else {
        None
    }
}

/// One relational operation applied while building a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    /// Conjunctive selection; every predicate targets the same relation.
    Select {
        predicates: Vec<Selection>,
    },
    Join {
        predicate: JoinPredicate,
    },
}

impl Action {
    pub fn select(predicates: Vec<Selection>) -> Result<Self> {
        let Some(first) = predicates.first() else {
            return Err(Error::Contract("selection action with no predicates".into()));
        };
        if predicates.iter().any(|p| p.relation != first.relation) {
            return Err(Error::Contract(
                "conjunctive selection spans more than one relation".into(),
            ));
        }
        Ok(Action::Select { predicates })
    }

    pub fn join(predicate: JoinPredicate) -> Self {
        Action::Join { predicate }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Select { predicates } => {
                write!(f, "σ[")?;
                for (i, p) in predicates.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ∧ ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, "]")
            }
            Action::Join { predicate } => write!(f, "⋈[{predicate}]"),
        }
    }
}

/// Progress through a left-deep plan for a fixed query.
///
/// Legality rules: a relation's selections are applied before it enters the
/// join chain; the first join may use any pending predicate whose endpoints
/// are fully filtered; later joins must touch the chain. A pending predicate
/// with both endpoints already in the chain is legal as a residual join.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanProgress {
    selected: BTreeSet<usize>,
    joined: BTreeSet<usize>,
    chain: BTreeSet<String>,
    applied: Vec<Action>,
}

impl PlanProgress {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn applied(&self) -> &[Action] {
        &self.applied
    }

    pub fn chain(&self) -> &BTreeSet<String> {
        &self.chain
    }

    pub fn is_terminal(&self, q: &QuerySpec) -> bool {
        self.selected.len() == q.selections.len() && self.joined.len() == q.joins.len()
    }

    fn pending_selections<'a>(&'a self, q: &'a QuerySpec, rel: &'a str) -> impl Iterator<Item = usize> + 'a {
        q.selections
            .iter()
            .enumerate()
            .filter(move |(i, s)| s.relation == rel && !self.selected.contains(i))
            .map(|(i, _)| i)
    }

    fn join_is_legal(&self, q: &QuerySpec, j: &JoinPredicate) -> bool {
        let filtered = |rel: &str| self.pending_selections(q, rel).next().is_none();
        if !filtered(&j.left.relation) || !filtered(&j.right.relation) {
            return false;
        }
        self.chain.is_empty() || self.chain.contains(&j.left.relation) || self.chain.contains(&j.right.relation)
    }

    /// Legal next actions: one conjunctive selection per relation with pending
    /// selections (relations in query order), then legal joins in query order.
    pub fn legal_actions(&self, q: &QuerySpec) -> Vec<Action> {
        let mut out = Vec::new();
        for rel in &q.relations {
            if self.chain.contains(rel) {
                continue;
            }
            let preds: Vec<Selection> = self
                .pending_selections(q, rel)
                .map(|i| q.selections[i].clone())
                .collect();
            if !preds.is_empty() {
                out.push(Action::Select { predicates: preds });
            }
        }
        for (i, j) in q.joins.iter().enumerate() {
            if !self.joined.contains(&i) && self.join_is_legal(q, j) {
                out.push(Action::join(j.clone()));
            }
        }
        out
    }

    /// Returns the progress after `action`, or a contract violation if the
    /// action is not legal here.
    pub fn apply(&self, q: &QuerySpec, action: &Action) -> Result<PlanProgress> {
        let mut next = self.clone();
        match action {
            Action::Select { predicates } => {
                let Some(first) = predicates.first() else {
                    return Err(Error::Contract("empty selection action".into()));
                };
                if self.chain.contains(&first.relation) {
                    return Err(Error::Contract(format!(
                        "selection on `{}` after it joined the chain",
                        first.relation
                    )));
                }
                for p in predicates {
                    if p.relation != first.relation {
                        return Err(Error::Contract(
                            "conjunctive selection spans more than one relation".into(),
                        ));
                    }
                    let idx = q
                        .selections
                        .iter()
                        .position(|s| s == p)
                        .ok_or_else(|| Error::Contract(format!("`{p}` is not in the query")))?;
                    if !next.selected.insert(idx) {
                        return Err(Error::Contract(format!("`{p}` was already applied")));
                    }
                }
            }
            Action::Join { predicate } => {
                let idx = q
                    .joins
                    .iter()
                    .position(|j| j == predicate)
                    .ok_or_else(|| Error::Contract(format!("`{predicate}` is not in the query")))?;
                if self.joined.contains(&idx) {
                    return Err(Error::Contract(format!("`{predicate}` was already applied")));
                }
                if !self.join_is_legal(q, predicate) {
                    return Err(Error::Contract(format!(
                        "`{predicate}` is not legal here (unfiltered input or cross product)"
                    )));
                }
                next.joined.insert(idx);
                next.chain.insert(predicate.left.relation.clone());
                next.chain.insert(predicate.right.relation.clone());
            }
        }
        next.applied.push(action.clone());
        Ok(next)
    }

    /// Replays `prefix` from the empty plan.
    pub fn replay(q: &QuerySpec, prefix: &[Action]) -> Result<PlanProgress> {
        prefix.iter().try_fold(PlanProgress::new(), |p, a| p.apply(q, a))
    }

    /// Everything the applied actions have touched.
    pub fn touched(&self, q: &QuerySpec) -> QuerySpec {
        let mut out = QuerySpec::default();
        for &i in &self.selected {
            out.relations.insert(q.selections[i].relation.clone());
        }
        for &i in &self.joined {
            out.relations.insert(q.joins[i].left.relation.clone());
            out.relations.insert(q.joins[i].right.relation.clone());
        }
        out.selections = self.selected.iter().map(|&i| q.selections[i].clone()).collect();
        out.joins = self.joined.iter().map(|&i| q.joins[i].clone()).collect();
        out
    }

    /// The intermediate result produced by the most recent action: the
    /// filtered base relation for a selection, the whole chain for a join.
    pub fn last_output(&self, q: &QuerySpec) -> Option<QuerySpec> {
        let last = self.applied.last()?;
        let relations: BTreeSet<String> = match last {
            Action::Select { predicates } => BTreeSet::from([predicates[0].relation.clone()]),
            Action::Join { .. } => self.chain.clone(),
        };
        let selections = self
            .selected
            .iter()
            .map(|&i| &q.selections[i])
            .filter(|s| relations.contains(&s.relation))
            .cloned()
            .collect();
        let joins = self
            .joined
            .iter()
            .map(|&i| &q.joins[i])
            .filter(|j| relations.contains(&j.left.relation) && relations.contains(&j.right.relation))
            .cloned()
            .collect();
        Some(QuerySpec {
            relations,
            selections,
            joins,
        })
    }

    /// Consumed predicate indices, usable as a memo key.
    pub fn key(&self) -> (Vec<usize>, Vec<usize>) {
        (
            self.selected.iter().copied().collect(),
            self.joined.iter().copied().collect(),
        )
    }
}

/// The subquery formed by the relations, selections and joins touched by a
/// legal action prefix. The empty prefix yields the empty query.
pub fn subquery_of(q: &QuerySpec, applied: &[Action]) -> Result<QuerySpec> {
    Ok(PlanProgress::replay(q, applied)?.touched(q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jp(s: &str) -> JoinPredicate {
        s.parse().unwrap()
    }

    fn two_way() -> QuerySpec {
        QuerySpec {
            relations: ["R".to_string(), "S".to_string()].into(),
            selections: vec![Selection::new("R", "a", 5.0), Selection::new("S", "b", 3.0)],
            joins: vec![jp("R.x = S.x")],
        }
    }

    #[test]
    fn join_predicate_is_unordered() {
        assert_eq!(jp("S.x = R.x"), jp("R.x = S.x"));
    }

    #[test]
    fn fresh_query_offers_only_selections() {
        let q = two_way();
        let legal = PlanProgress::new().legal_actions(&q);
        assert_eq!(legal.len(), 2);
        assert!(legal.iter().all(|a| matches!(a, Action::Select { .. })));
    }

    #[test]
    fn join_after_both_selections() {
        let q = two_way();
        let p = PlanProgress::new();
        let p = p.apply(&q, &p.legal_actions(&q)[0]).unwrap();
        let p = p.apply(&q, &p.legal_actions(&q)[0]).unwrap();
        assert_eq!(p.legal_actions(&q), vec![Action::join(jp("R.x = S.x"))]);
        let p = p.apply(&q, &Action::join(jp("R.x = S.x"))).unwrap();
        assert!(p.is_terminal(&q));
        assert!(p.legal_actions(&q).is_empty());
    }

    #[test]
    fn premature_join_is_a_contract_violation() {
        let q = two_way();
        let err = PlanProgress::new()
            .apply(&q, &Action::join(jp("R.x = S.x")))
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn subquery_of_single_selection() {
        let q = two_way();
        let sel = Action::select(vec![Selection::new("R", "a", 5.0)]).unwrap();
        let sub = subquery_of(&q, &[sel]).unwrap();
        assert_eq!(sub.relations, BTreeSet::from(["R".to_string()]));
        assert_eq!(sub.selections, vec![Selection::new("R", "a", 5.0)]);
        assert!(sub.joins.is_empty());
    }

    #[test]
    fn subquery_of_empty_prefix_is_empty() {
        assert!(subquery_of(&two_way(), &[]).unwrap().is_empty());
    }

    #[test]
    fn chain_joins_never_cross() {
        // R - S - T - U chain: once R-S is joined, T-U would be a cross product.
        let q = QuerySpec {
            relations: ["R", "S", "T", "U"].map(String::from).into(),
            selections: vec![],
            joins: vec![jp("R.x = S.x"), jp("S.y = T.y"), jp("T.z = U.z")],
        };
        let start = PlanProgress::new().legal_actions(&q);
        assert_eq!(start.len(), 3);
        let p = PlanProgress::new().apply(&q, &start[0]).unwrap();
        assert_eq!(p.legal_actions(&q), vec![Action::join(jp("S.y = T.y"))]);
    }
}
