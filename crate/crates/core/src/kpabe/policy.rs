use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AbeError, AttributeId, Universe};

/// Monotone access tree. Leaves are attributes, gates are AND/OR.
///
/// Keys require every leaf attribute to appear once: the per-attribute key
/// components are indexed by attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessPolicy {
    Leaf(AttributeId),
    And(Vec<AccessPolicy>),
    Or(Vec<AccessPolicy>),
}

impl AccessPolicy {
    pub fn leaf(id: AttributeId) -> Self {
        AccessPolicy::Leaf(id)
    }

    /// AND gate; a single child is returned as is.
    pub fn all_of(mut children: Vec<AccessPolicy>) -> Self {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            AccessPolicy::And(children)
        }
    }

    /// OR gate; a single child is returned as is.
    pub fn any_of(mut children: Vec<AccessPolicy>) -> Self {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            AccessPolicy::Or(children)
        }
    }

    /// Leaf attribute set λ.
    pub fn attributes(&self) -> BTreeSet<AttributeId> {
        let mut out = BTreeSet::new();
        self.visit_leaves(&mut |a| {
            out.insert(a);
        });
        out
    }

    pub fn leaf_count(&self) -> usize {
        let mut n = 0;
        self.visit_leaves(&mut |_| n += 1);
        n
    }

    pub fn visit_leaves(&self, f: &mut impl FnMut(AttributeId)) {
        match self {
            AccessPolicy::Leaf(a) => f(*a),
            AccessPolicy::And(c) | AccessPolicy::Or(c) => c.iter().for_each(|p| p.visit_leaves(f)),
        }
    }

    /// Plain monotone Boolean evaluation over attribute presence.
    pub fn is_satisfied_by(&self, attrs: &BTreeSet<AttributeId>) -> bool {
        self.eval_with(&|a| attrs.contains(&a))
    }

    pub(crate) fn eval_with(&self, present: &impl Fn(AttributeId) -> bool) -> bool {
        match self {
            AccessPolicy::Leaf(a) => present(*a),
            AccessPolicy::And(c) => c.iter().all(|p| p.eval_with(present)),
            AccessPolicy::Or(c) => c.iter().any(|p| p.eval_with(present)),
        }
    }

    /// Checks gate arity, unique leaves and (optionally) universe membership.
    pub fn validate(&self, universe: Option<&Universe>) -> Result<(), AbeError> {
        let mut seen = BTreeSet::new();
        self.validate_inner(universe, &mut seen)
    }

    fn validate_inner(
        &self,
        universe: Option<&Universe>,
        seen: &mut BTreeSet<AttributeId>,
    ) -> Result<(), AbeError> {
        match self {
            AccessPolicy::Leaf(a) => {
                if let Some(u) = universe {
                    if !u.contains(*a) {
                        return Err(AbeError::UnknownAttribute(*a));
                    }
                }
                if !seen.insert(*a) {
                    return Err(AbeError::MalformedPolicy(format!(
                        "attribute {a} appears in more than one leaf"
                    )));
                }
                Ok(())
            }
            AccessPolicy::And(c) | AccessPolicy::Or(c) => {
                if c.is_empty() {
                    return Err(AbeError::MalformedPolicy("gate without children".into()));
                }
                c.iter().try_for_each(|p| p.validate_inner(universe, seen))
            }
        }
    }

    /// Renders with attribute names, e.g. `A & (B | C | D)`.
    pub fn render(&self, universe: &Universe) -> String {
        self.render_inner(universe, true)
    }

    fn render_inner(&self, universe: &Universe, top: bool) -> String {
        match self {
            AccessPolicy::Leaf(a) => universe
                .name(*a)
                .map(str::to_owned)
                .unwrap_or_else(|| a.to_string()),
            AccessPolicy::And(c) | AccessPolicy::Or(c) => {
                let op = if matches!(self, AccessPolicy::And(_)) { " & " } else { " | " };
                let body = c
                    .iter()
                    .map(|p| p.render_inner(universe, false))
                    .collect::<Vec<_>>()
                    .join(op);
                if top {
                    body
                } else {
                    format!("({body})")
                }
            }
        }
    }

    /// Parses `A & (B | C)` style formulas over universe names. `&` binds
    /// tighter than `|`; `and`/`or` are accepted as keywords.
    pub fn parse(text: &str, universe: &Universe) -> Result<Self, AbeError> {
        let tokens = tokenize(text)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            universe,
        };
        let policy = p.or_expr()?;
        if p.pos != p.tokens.len() {
            return Err(AbeError::PolicySyntax(format!(
                "unexpected token {:?}",
                p.tokens[p.pos]
            )));
        }
        policy.validate(Some(universe))?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    And,
    Or,
    Open,
    Close,
    Name(String),
}

fn tokenize(text: &str) -> Result<Vec<Token>, AbeError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '&' => {
                chars.next();
                out.push(Token::And);
            }
            '|' => {
                chars.next();
                out.push(Token::Or);
            }
            '(' => {
                chars.next();
                out.push(Token::Open);
            }
            ')' => {
                chars.next();
                out.push(Token::Close);
            }
            c if is_name_char(c) => {
                let mut name = String::new();
                while let Some(&c) = chars.peek() {
                    if !is_name_char(c) {
                        break;
                    }
                    name.push(c);
                    chars.next();
                }
                out.push(match name.as_str() {
                    "and" | "AND" => Token::And,
                    "or" | "OR" => Token::Or,
                    _ => Token::Name(name),
                });
            }
            other => {
                return Err(AbeError::PolicySyntax(format!("unexpected character {other:?}")))
            }
        }
    }
    Ok(out)
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '@' | '.' | '-' | ':')
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    universe: &'a Universe,
}

impl Parser<'_> {
    fn or_expr(&mut self) -> Result<AccessPolicy, AbeError> {
        let mut terms = vec![self.and_expr()?];
        while self.tokens.get(self.pos) == Some(&Token::Or) {
            self.pos += 1;
            terms.push(self.and_expr()?);
        }
        Ok(AccessPolicy::any_of(terms))
    }

    fn and_expr(&mut self) -> Result<AccessPolicy, AbeError> {
        let mut terms = vec![self.atom()?];
        while self.tokens.get(self.pos) == Some(&Token::And) {
            self.pos += 1;
            terms.push(self.atom()?);
        }
        Ok(AccessPolicy::all_of(terms))
    }

    fn atom(&mut self) -> Result<AccessPolicy, AbeError> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.or_expr()?;
                if self.tokens.get(self.pos) != Some(&Token::Close) {
                    return Err(AbeError::PolicySyntax("missing ')'".into()));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Token::Name(n)) => {
                self.pos += 1;
                self.universe
                    .id(&n)
                    .map(AccessPolicy::Leaf)
                    .ok_or(AbeError::UnknownAttributeName(n))
            }
            Some(t) => Err(AbeError::PolicySyntax(format!("unexpected token {t:?}"))),
            None => Err(AbeError::PolicySyntax("unexpected end of formula".into())),
        }
    }
}
