use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::relation::{Action, JoinPredicate, PlanProgress, QuerySpec, Selection};

enum Node {
    Scan(String),
    Select(Vec<Selection>, Box<Node>),
    Join(JoinPredicate, Box<Node>, Option<Box<Node>>),
}

/// Renders a complete plan as an indented left-deep tree, root first.
///
/// ```text
/// ⋈ S.y = T.y
///   ⋈ R.x = S.x
///     σ R.a <= 9
///       R
///     S
///   σ T.b <= 3
///     T
/// ```
pub fn render_plan(query: &QuerySpec, actions: &[Action]) -> Result<String> {
    let progress = PlanProgress::replay(query, actions)?;
    if !progress.is_terminal(query) {
        return Err(Error::Contract("plan leaves predicates unapplied".into()));
    }
    let mut leaves: BTreeMap<String, Node> = query
        .relations
        .iter()
        .map(|r| (r.clone(), Node::Scan(r.clone())))
        .collect();
    let mut chain: Option<(Node, Vec<String>)> = None;
    for a in actions {
        match a {
            Action::Select { predicates } => {
                let rel = &predicates[0].relation;
                let leaf = leaves.remove(rel).expect("legal plan");
                leaves.insert(rel.clone(), Node::Select(predicates.clone(), Box::new(leaf)));
            }
            Action::Join { predicate } => {
                let (l, r) = (&predicate.left().relation, &predicate.right().relation);
                chain = Some(match chain.take() {
                    None => {
                        let left = leaves.remove(l).expect("legal plan");
                        let right = leaves.remove(r).expect("legal plan");
                        (
                            Node::Join(predicate.clone(), Box::new(left), Some(Box::new(right))),
                            vec![l.clone(), r.clone()],
                        )
                    }
                    Some((node, mut members)) => {
                        let new = [l, r].into_iter().find(|x| !members.contains(x)).cloned();
                        let right = match new {
                            Some(rel) => {
                                members.push(rel.clone());
                                Some(Box::new(leaves.remove(&rel).expect("legal plan")))
                            }
                            None => None,
                        };
                        (Node::Join(predicate.clone(), Box::new(node), right), members)
                    }
                });
            }
        }
    }
    let root = match chain {
        Some((node, _)) => node,
        None => leaves
            .into_values()
            .next()
            .ok_or_else(|| Error::Contract("empty query".into()))?,
    };
    let mut out = String::new();
    draw(&root, 0, &mut out);
    Ok(out)
}

fn draw(node: &Node, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match node {
        Node::Scan(r) => {
            let _ = writeln!(out, "{pad}{r}");
        }
        Node::Select(preds, input) => {
            let text: Vec<String> = preds.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "{pad}σ {}", text.join(" ∧ "));
            draw(input, depth + 1, out);
        }
        Node::Join(p, left, right) => match right {
            Some(right) => {
                let _ = writeln!(out, "{pad}⋈ {p}");
                draw(left, depth + 1, out);
                draw(right, depth + 1, out);
            }
            None => {
                let _ = writeln!(out, "{pad}⋈ {p} (residual)");
                draw(left, depth + 1, out);
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_the_documented_tree() {
        let q = QuerySpec {
            relations: ["R", "S", "T"].iter().map(|s| s.to_string()).collect(),
            selections: vec![Selection::new("R", "a", 9.0), Selection::new("T", "b", 3.0)],
            joins: vec!["R.x = S.x".parse().unwrap(), "S.y = T.y".parse().unwrap()],
        };
        let plan = vec![
            Action::select(vec![q.selections[0].clone()]).unwrap(),
            Action::select(vec![q.selections[1].clone()]).unwrap(),
            Action::join(q.joins[0].clone()),
            Action::join(q.joins[1].clone()),
        ];
        let expected = "⋈ S.y = T.y\n  ⋈ R.x = S.x\n    σ R.a <= 9\n      R\n    S\n  σ T.b <= 3\n    T\n";
        assert_eq!(render_plan(&q, &plan).unwrap(), expected);
    }

    #[test]
    fn single_relation_plan() {
        let mut q = QuerySpec::single("R");
        q.selections.push(Selection::new("R", "a", 1.5));
        let plan = vec![Action::select(q.selections.clone()).unwrap()];
        assert_eq!(render_plan(&q, &plan).unwrap(), "σ R.a <= 1.5\n  R\n");
    }

    #[test]
    fn incomplete_plans_are_rejected() {
        let mut q = QuerySpec::single("R");
        q.selections.push(Selection::new("R", "a", 1.5));
        assert!(render_plan(&q, &[]).is_err());
    }
}
