//! Conjunctive queries over a tree of foreign-key joins.
//!
//! Two input formats are accepted. The JSON form is
//!
//! ```json
//! {"relations": ["customers", "purchases"],
//!  "joins": [["purchases", "customer_id"]],
//!  "predicates": [{"relation": "customers", "attribute": "hair", "op": "eq", "value": "Blond"}]}
//! ```
//!
//! and the SQL form is a small subset:
//!
//! ```sql
//! SELECT * FROM customers c, purchases p
//! WHERE c.id = p.customer_id AND c.hair = 'Blond' AND p.day IN ('Mon', 'Tue')
//!   AND p.amount BETWEEN 10 AND 20
//! ```
//!
//! Join conditions must equate a foreign key with the primary key it
//! references. Aliases are optional.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{AttributeKind, Dictionary, DomainSource, Schema};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Str(String),
    Num(serde_json::Number),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Num(n) => n.as_f64(),
            Scalar::Str(s) => s.trim().parse().ok(),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Str(s) => f.write_str(s),
            Scalar::Num(n) => write!(f, "{n}"),
        }
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Str(s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Operand {
    Eq { value: Scalar },
    In { values: Vec<Scalar> },
    Range { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub relation: String,
    pub attribute: String,
    #[serde(flatten)]
    pub operand: Operand,
}

impl Predicate {
    pub fn eq(relation: &str, attribute: &str, value: impl Into<Scalar>) -> Predicate {
        Predicate {
            relation: relation.into(),
            attribute: attribute.into(),
            operand: Operand::Eq {
                value: value.into(),
            },
        }
    }

    pub fn is_in(relation: &str, attribute: &str, values: Vec<Scalar>) -> Predicate {
        Predicate {
            relation: relation.into(),
            attribute: attribute.into(),
            operand: Operand::In { values },
        }
    }

    pub fn range(relation: &str, attribute: &str, lo: f64, hi: f64) -> Predicate {
        Predicate {
            relation: relation.into(),
            attribute: attribute.into(),
            operand: Operand::Range { lo, hi },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub relations: Vec<String>,
    /// `[parent relation, foreign-key attribute]` pairs.
    #[serde(default)]
    pub joins: Vec<(String, String)>,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
}

impl Query {
    /// Sorted relations, joins and predicates, so equal queries serialize
    /// identically.
    pub fn canonical(mut self) -> Query {
        self.relations.sort();
        self.relations.dedup();
        self.joins.sort();
        self.joins.dedup();
        self.predicates.sort_by_cached_key(|p| serde_json::to_string(p).expect("serializable"));
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("queries serialize")
    }

    pub fn join_count(&self) -> usize {
        self.joins.len()
    }

    /// Checks the query against a schema and the dictionaries of its
    /// attributes.
    pub fn validate(&self, schema: &Schema, domains: &dyn DomainSource) -> Result<()> {
        if self.relations.is_empty() {
            return Err(Error::InvalidQuery("no relations".into()));
        }
        let rels: BTreeSet<&str> = self.relations.iter().map(String::as_str).collect();
        if rels.len() != self.relations.len() {
            return Err(Error::InvalidQuery("duplicate relation".into()));
        }
        for r in &rels {
            if schema.relation(r).is_none() {
                return Err(Error::UnknownRelation(r.to_string()));
            }
        }
        let mut neighbours: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (parent, fk) in &self.joins {
            let edge = schema.fk_edge(parent, fk).ok_or_else(|| {
                Error::InvalidQuery(format!("{parent}.{fk} is not a foreign key of the schema"))
            })?;
            if !rels.contains(parent.as_str()) || !rels.contains(edge.child.as_str()) {
                return Err(Error::InvalidQuery(format!(
                    "join {parent}.{fk} uses a relation outside the query"
                )));
            }
            let child = schema.relation(&edge.child).expect("validated").name.as_str();
            neighbours.entry(parent).or_default().push(child);
            neighbours.entry(child).or_default().push(parent);
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.relations[0].as_str()];
        while let Some(r) = stack.pop() {
            if seen.insert(r) {
                stack.extend(neighbours.get(r).into_iter().flatten());
            }
        }
        if seen.len() != rels.len() {
            return Err(Error::Disconnected);
        }
        if self.joins.len() + 1 != rels.len() {
            return Err(Error::InvalidQuery("join graph has a cycle".into()));
        }
        for p in &self.predicates {
            if !rels.contains(p.relation.as_str()) {
                return Err(Error::InvalidQuery(format!(
                    "predicate on {} which is not queried",
                    p.relation
                )));
            }
            let decl = schema.relation(&p.relation).expect("checked above");
            let unknown = || Error::UnknownAttribute {
                relation: p.relation.clone(),
                attribute: p.attribute.clone(),
            };
            let attr = decl
                .modeled_attributes()
                .find(|a| a.name == p.attribute)
                .ok_or_else(unknown)?;
            domains.dictionary(&p.relation, &p.attribute).ok_or_else(unknown)?;
            let mismatch = |message: &str| Error::TypeMismatch {
                relation: p.relation.clone(),
                attribute: p.attribute.clone(),
                message: message.to_string(),
            };
            match (&p.operand, attr.kind) {
                (Operand::Range { .. }, AttributeKind::Categorical) => {
                    return Err(mismatch("range on a categorical attribute"))
                }
                (Operand::Range { lo, hi }, AttributeKind::Numeric) => {
                    if lo.is_nan() || hi.is_nan() || lo > hi {
                        return Err(Error::InvalidQuery(format!(
                            "interval [{lo}, {hi}] on {}.{} is empty",
                            p.relation, p.attribute
                        )));
                    }
                }
                (Operand::Eq { value }, AttributeKind::Numeric) if value.as_f64().is_none() => {
                    return Err(mismatch("non-numeric operand"));
                }
                (Operand::In { values }, AttributeKind::Numeric) if values.iter().any(|v| v.as_f64().is_none()) => {
                    return Err(mismatch("non-numeric operand"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Relations with no queried relation pointing at them.
    pub fn top_relations(&self, schema: &Schema) -> Vec<String> {
        let referenced: BTreeSet<String> = self
            .joins
            .iter()
            .filter_map(|(p, fk)| schema.fk_edge(p, fk).map(|e| e.child))
            .collect();
        self.relations
            .iter()
            .filter(|r| !referenced.contains(*r))
            .cloned()
            .collect()
    }
}

/// The codes of an attribute that satisfy a predicate, sorted.
pub fn predicate_codes(pred: &Predicate, dict: &Dictionary) -> Vec<u32> {
    let lookup = |v: &Scalar| -> Option<u32> {
        match dict.kind {
            AttributeKind::Categorical => match v {
                Scalar::Str(text) => dict.code_of(text),
                Scalar::Num(_) => dict.code_of(&v.to_string()),
            },
            AttributeKind::Numeric => v.as_f64().and_then(|x| dict.bin_of(x)),
        }
    };
    let mut codes: Vec<u32> = match &pred.operand {
        Operand::Eq { value } => lookup(value).into_iter().collect(),
        Operand::In { values } => values.iter().filter_map(lookup).collect(),
        Operand::Range { lo, hi } => match dict.kind {
            AttributeKind::Numeric => dict.bins_overlapping(*lo, *hi),
            AttributeKind::Categorical => Vec::new(),
        },
    };
    codes.sort_unstable();
    codes.dedup();
    codes
}

/// Parses either format and validates the result.
pub fn parse_query(text: &str, schema: &Schema, domains: &dyn DomainSource) -> Result<Query> {
    let query = if text.trim_start().starts_with('{') {
        serde_json::from_str::<Query>(text).map_err(|e| Error::InvalidQuery(e.to_string()))?
    } else {
        parse_sql(text, schema)?
    };
    let query = query.canonical();
    query.validate(schema, domains)?;
    Ok(query)
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Word(String),
    Str(String),
    Num(String),
    Sym(char),
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(Error::InvalidQuery("unterminated string".into())),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Token::Str(s));
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || matches!(chars[i], '.' | 'e' | 'E')) {
                i += 1;
            }
            out.push(Token::Num(chars[start..i].iter().collect()));
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '.')) {
                i += 1;
            }
            out.push(Token::Word(chars[start..i].iter().collect()));
        } else if matches!(c, ',' | '(' | ')' | '=' | '*' | ';') {
            out.push(Token::Sym(c));
            i += 1;
        } else {
            return Err(Error::InvalidQuery(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        if self.is_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::InvalidQuery(format!("expected {kw}")))
        }
    }

    fn symbol(&mut self, c: char) -> Result<()> {
        match self.next() {
            Some(Token::Sym(s)) if s == c => Ok(()),
            _ => Err(Error::InvalidQuery(format!("expected `{c}`"))),
        }
    }

    fn word(&mut self) -> Result<String> {
        match self.next() {
            Some(Token::Word(w)) => Ok(w),
            _ => Err(Error::InvalidQuery("expected a name".into())),
        }
    }

    fn scalar(&mut self) -> Result<Scalar> {
        match self.next() {
            Some(Token::Str(s)) => Ok(Scalar::Str(s)),
            Some(Token::Num(n)) => n
                .parse::<serde_json::Number>()
                .map(Scalar::Num)
                .map_err(|_| Error::InvalidQuery(format!("bad number {n}"))),
            _ => Err(Error::InvalidQuery("expected a literal".into())),
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.scalar()?
            .as_f64()
            .ok_or_else(|| Error::InvalidQuery("expected a number".into()))
    }
}

fn parse_sql(text: &str, schema: &Schema) -> Result<Query> {
    let mut p = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    p.keyword("select")?;
    p.symbol('*')?;
    p.keyword("from")?;
    let mut aliases: BTreeMap<String, String> = BTreeMap::new();
    let mut relations = Vec::new();
    loop {
        let name = p.word()?;
        if p.is_keyword("as") {
            p.pos += 1;
        }
        let alias = match p.peek() {
            Some(Token::Word(w)) if !w.eq_ignore_ascii_case("where") => p.word()?,
            _ => name.clone(),
        };
        aliases.insert(alias, name.clone());
        aliases.insert(name.clone(), name.clone());
        relations.push(name);
        if p.peek() == Some(&Token::Sym(',')) {
            p.pos += 1;
        } else {
            break;
        }
    }

    let resolve = |qualified: &str| -> Result<(String, String)> {
        let (alias, attr) = qualified
            .split_once('.')
            .ok_or_else(|| Error::InvalidQuery(format!("unqualified column {qualified}")))?;
        let rel = aliases
            .get(alias)
            .ok_or_else(|| Error::UnknownRelation(alias.to_string()))?;
        Ok((rel.clone(), attr.to_string()))
    };

    let mut joins = Vec::new();
    let mut predicates = Vec::new();
    if p.is_keyword("where") {
        p.pos += 1;
        loop {
            let (rel, attr) = resolve(&p.word()?)?;
            if p.is_keyword("in") {
                p.pos += 1;
                p.symbol('(')?;
                let mut values = vec![p.scalar()?];
                while p.peek() == Some(&Token::Sym(',')) {
                    p.pos += 1;
                    values.push(p.scalar()?);
                }
                p.symbol(')')?;
                predicates.push(Predicate::is_in(&rel, &attr, values));
            } else if p.is_keyword("between") {
                p.pos += 1;
                let lo = p.number()?;
                p.keyword("and")?;
                let hi = p.number()?;
                predicates.push(Predicate::range(&rel, &attr, lo, hi));
            } else {
                p.symbol('=')?;
                match p.peek() {
                    Some(Token::Word(_)) => {
                        let (rel2, attr2) = resolve(&p.word()?)?;
                        joins.push(join_from_equality(schema, (&rel, &attr), (&rel2, &attr2))?);
                    }
                    _ => {
                        let value = p.scalar()?;
                        predicates.push(Predicate::eq(&rel, &attr, value));
                    }
                }
            }
            if p.is_keyword("and") {
                p.pos += 1;
            } else {
                break;
            }
        }
    }
    if p.peek() == Some(&Token::Sym(';')) {
        p.pos += 1;
    }
    if p.peek().is_some() {
        return Err(Error::InvalidQuery("trailing input".into()));
    }
    Ok(Query {
        relations,
        joins,
        predicates,
    })
}

fn join_from_equality(schema: &Schema, a: (&str, &str), b: (&str, &str)) -> Result<(String, String)> {
    for (fk_side, pk_side) in [(a, b), (b, a)] {
        let Some(decl) = schema.relation(fk_side.0) else {
            continue;
        };
        if let Some(fk) = decl.foreign_key(fk_side.1) {
            let target = schema.relation(&fk.references);
            if fk.references == pk_side.0
                && target.and_then(|t| t.primary_key.as_deref()) == Some(pk_side.1)
            {
                return Ok((fk_side.0.to_string(), fk_side.1.to_string()));
            }
        }
    }
    Err(Error::InvalidQuery(format!(
        "{}.{} = {}.{} is not a foreign-key join",
        a.0, a.1, b.0, b.1
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    fn toy() -> crate::catalog::Catalog {
        synth::toy_catalog()
    }

    #[test]
    fn sql_listing_parses() {
        let cat = toy();
        let text = synth::TOY_IZUMI_SQL;
        let q = parse_query(text, &cat.schema, &cat).unwrap();
        assert_eq!(q.relations.len(), 3);
        assert_eq!(q.joins.len(), 2);
        assert_eq!(q.predicates.len(), 3);
    }

    #[test]
    fn single_relation_query() {
        let cat = toy();
        let q = parse_query(
            "SELECT * FROM customers WHERE customers.nationality = 'Swedish'",
            &cat.schema,
            &cat,
        )
        .unwrap();
        assert!(q.joins.is_empty());
        assert_eq!(q.predicates.len(), 1);
    }

    #[test]
    fn aliases_and_in_lists() {
        let cat = toy();
        let q = parse_query(
            "select * from customers as c, purchases p where c.id = p.customer_id and p.day in ('Mon', 'Tue');",
            &cat.schema,
            &cat,
        )
        .unwrap();
        assert_eq!(q.joins, vec![("purchases".to_string(), "customer_id".to_string())]);
        assert!(matches!(&q.predicates[0].operand, Operand::In { values } if values.len() == 2));
    }

    #[test]
    fn validation_errors() {
        let cat = toy();
        let s = &cat.schema;
        let disconnected = Query {
            relations: vec!["customers".into(), "shops".into()],
            ..Default::default()
        };
        assert!(matches!(disconnected.validate(s, &cat), Err(Error::Disconnected)));
        let not_fk = Query {
            relations: vec!["customers".into(), "purchases".into()],
            joins: vec![("customers".into(), "id".into())],
            predicates: vec![],
        };
        assert!(matches!(not_fk.validate(s, &cat), Err(Error::InvalidQuery(_))));
        let unknown = Query {
            relations: vec!["martians".into()],
            ..Default::default()
        };
        assert!(matches!(unknown.validate(s, &cat), Err(Error::UnknownRelation(_))));
        let bad_attr = Query {
            relations: vec!["customers".into()],
            joins: vec![],
            predicates: vec![Predicate::eq("customers", "shoe_size", "9")],
        };
        assert!(matches!(bad_attr.validate(s, &cat), Err(Error::UnknownAttribute { .. })));
        let key_attr = Query {
            relations: vec!["customers".into()],
            joins: vec![],
            predicates: vec![Predicate::eq("customers", "id", "1")],
        };
        assert!(matches!(key_attr.validate(s, &cat), Err(Error::UnknownAttribute { .. })));
        let range = Query {
            relations: vec!["customers".into()],
            joins: vec![],
            predicates: vec![Predicate::range("customers", "hair", 0.0, 1.0)],
        };
        assert!(matches!(range.validate(s, &cat), Err(Error::TypeMismatch { .. })));
        let outside = Query {
            relations: vec!["customers".into()],
            joins: vec![],
            predicates: vec![Predicate::eq("shops", "name", "Ikea")],
        };
        assert!(matches!(outside.validate(s, &cat), Err(Error::InvalidQuery(_))));
        assert!(parse_query("SELECT * FROM customers WHERE", s, &cat).is_err());
        assert!(parse_query("{\"relations\": 3}", s, &cat).is_err());
    }

    #[test]
    fn eq_codes() {
        let cat = toy();
        let dict = cat.dictionary("customers", "nationality").unwrap();
        let swedish = Predicate::eq("customers", "nationality", "Swedish");
        assert_eq!(predicate_codes(&swedish, dict), vec![dict.code_of("Swedish").unwrap()]);
        let martian = Predicate::eq("customers", "nationality", "Martian");
        assert!(predicate_codes(&martian, dict).is_empty());
        let both = Predicate::is_in(
            "customers",
            "nationality",
            vec!["Swedish".into(), "Martian".into(), "American".into()],
        );
        assert_eq!(predicate_codes(&both, dict), vec![0, 1]);
    }

    #[test]
    fn range_codes() {
        let dict = Dictionary {
            kind: AttributeKind::Numeric,
            labels: vec!["[0, 15)".into(), "[15, 30]".into()],
            bin_edges: vec![0.0, 15.0, 30.0],
        };
        let p = Predicate::range("r", "x", 10.0, 20.0);
        assert_eq!(predicate_codes(&p, &dict), vec![0, 1]);
        let eq = Predicate::eq("r", "x", Scalar::Num(17.into()));
        assert_eq!(predicate_codes(&eq, &dict), vec![1]);
    }

    #[test]
    fn top_relations_of_star() {
        let cat = toy();
        let q = parse_query(synth::TOY_IZUMI_SQL, &cat.schema, &cat).unwrap();
        assert_eq!(q.top_relations(&cat.schema), vec!["purchases".to_string()]);
    }

    fn arb_query() -> impl Strategy<Value = Query> {
        let preds = proptest::collection::vec(
            prop_oneof![
                prop::sample::select(vec!["American", "Swedish", "Martian"])
                    .prop_map(|v| Predicate::eq("customers", "nationality", v)),
                prop::sample::select(vec!["Blond", "Brown"])
                    .prop_map(|v| Predicate::eq("customers", "hair", v)),
                proptest::collection::vec(prop::sample::select(vec!["Mon", "Tue", "Wed"]), 1..3)
                    .prop_map(|vs| Predicate::is_in(
                        "purchases",
                        "day",
                        vs.into_iter().map(Scalar::from).collect()
                    )),
            ],
            0..4,
        );
        preds.prop_map(|predicates| {
            Query {
                relations: vec!["purchases".into(), "customers".into()],
                joins: vec![("purchases".into(), "customer_id".into())],
                predicates,
            }
            .canonical()
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(q in arb_query()) {
            let cat = toy();
            let back = parse_query(&q.to_json(), &cat.schema, &cat).unwrap();
            prop_assert_eq!(back, q);
        }

        #[test]
        fn mutations_are_rejected(q in arb_query(), which in 0usize..4) {
            let cat = toy();
            let mut bad = q.clone();
            match which {
                0 => bad.relations.push("nowhere".into()),
                1 => bad.joins.clear(),
                2 => bad.predicates.push(Predicate::eq("customers", "nope", "x")),
                _ => bad.joins.push(("purchases".into(), "bogus".into())),
            }
            prop_assert!(bad.validate(&cat.schema, &cat).is_err());
        }
    }
}
