//! Stable text notation for query IR, embedded in audit reports.
//! Grammar: see `docs/query-trace.md`.

use super::{Comparison, ConstraintQuery, HybridQuery, NodeSelector, ReturnSpec, TraversalQuery};
use crate::store::Direction;
use crate::value::{fmt_num, Value};

fn literal(v: &Value) -> String {
    match v {
        Value::Text(s) | Value::Enum(s) => serde_json::to_string(s).expect("string serializes"),
        other => other.to_string(),
    }
}

fn constraint(q: &ConstraintQuery) -> String {
    let mut out = format!("SELECT {}", q.table);
    for (i, p) in q.predicates.iter().enumerate() {
        out.push_str(if i == 0 { " WHERE " } else { " AND " });
        let operand = match &p.cmp {
            Comparison::Eq(v)
            | Comparison::Ne(v)
            | Comparison::Lt(v)
            | Comparison::Le(v)
            | Comparison::Gt(v)
            | Comparison::Ge(v) => literal(v),
            Comparison::In(vs) => {
                format!("[{}]", vs.iter().map(literal).collect::<Vec<_>>().join(", "))
            }
            Comparison::ContainsPoint(x) => fmt_num(*x),
        };
        out.push_str(&format!("{} {} {}", p.column, p.cmp.symbol(), operand));
    }
    out
}

fn node(label: &str, sel: Option<&NodeSelector>) -> String {
    match sel {
        Some(s) => format!(
            "({} {{id:{}}})",
            label,
            serde_json::to_string(s.id.as_str()).expect("string serializes")
        ),
        None => format!("({label})"),
    }
}

fn traversal(q: &TraversalQuery) -> String {
    let mut out = format!("MATCH {}", node(&q.start.label, Some(&q.start)));
    for (i, s) in q.steps.iter().enumerate() {
        let last = i + 1 == q.steps.len();
        let target = node(&s.target_label, if last { q.end.as_ref() } else { None });
        let edge = match s.dir {
            Direction::Out => format!("-[{}]->", s.edge_type),
            Direction::In => format!("<-[{}]-", s.edge_type),
            Direction::Both => format!("-[{}]-", s.edge_type),
        };
        out.push_str(&edge);
        out.push_str(&target);
    }
    let returns = match q.returns {
        ReturnSpec::Paths => "paths",
        ReturnSpec::Nodes => "nodes",
    };
    out.push_str(&format!(" DEPTH<={} RETURN {returns}", q.max_depth));
    out
}

/// Renders a query in the trace notation. Pure and deterministic.
pub fn render_trace(q: &HybridQuery) -> String {
    match q {
        HybridQuery::Constraint(c) => constraint(c),
        HybridQuery::Topology(ts) => ts.iter().map(traversal).collect::<Vec<_>>().join(" UNION "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{generate_query, Category, Predicate, VerificationTask};
    use crate::store::EntityId;

    #[test]
    fn constraint_trace() {
        let q = HybridQuery::Constraint(ConstraintQuery {
            table: "DosageRules".into(),
            predicates: vec![
                Predicate::new("drug", Comparison::Eq(Value::text("metformin"))),
                Predicate::new("crcl_range", Comparison::ContainsPoint(25.0)),
            ],
        });
        assert_eq!(render_trace(&q), r#"SELECT DosageRules WHERE drug = "metformin" AND crcl_range @> 25"#);
    }

    #[test]
    fn interaction_trace() {
        let t = VerificationTask::new(
            "T",
            Category::Interaction,
            vec![EntityId::new("Abemaciclib"), EntityId::new("Rifampin")],
        )
        .unwrap();
        let text = render_trace(&generate_query(&t).unwrap());
        assert_eq!(
            text,
            concat!(
                r#"MATCH (Drug {id:"abemaciclib"})-[INTERACTS_WITH]-(Drug {id:"rifampin"}) DEPTH<=3 RETURN paths"#,
                r#" UNION MATCH (Drug {id:"abemaciclib"})-[MEMBER_OF]->(Class)-[CLASS_INTERACTS_WITH]-(Class)<-[MEMBER_OF]-(Drug {id:"rifampin"}) DEPTH<=3 RETURN paths"#
            )
        );
    }
}
