//! Reader and writer for expanded `policy.conf`-style policy text.
//!
//! Recognised statements:
//!
//! ```text
//! class C ;                      class C { p1 p2 } ;
//! sid NAME ;                     sid NAME user:role:type:range ;
//! attribute A ;
//! type T ;                       type T, A1, A2 ;
//! typeattribute T A1, A2 ;
//! allow SRC TGT : CLASS PERMS ;
//! neverallow SRC TGT : CLASS PERMS ;
//! type_transition SUBJ OBJ : CLASS RESULT ;
//! genfscon FS /path user:role:type:range ;
//! ```
//!
//! A malformed statement produces one [`ParseError`] and parsing resumes after
//! its terminating `;`.

mod lexer;
mod serialize;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    is_identifier, AccessVector, AvRule, GenfsContext, InitialSid, ModelError, Origin, Perms, Policy, PolicyBuilder,
    RuleKind, SecurityContext, TypeSetExpr, TypeTransitionRule,
};
use lexer::{tokenize, TokKind, Token};

pub use serialize::serialize_policy;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub snippet: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Reject undeclared types, classes and permissions instead of journaling them.
    pub strict: bool,
    /// File name recorded in rule origins.
    pub file: Option<Arc<str>>,
}

/// Parses policy text leniently.
pub fn parse_policy(text: &str) -> Result<Policy, Vec<ParseError>> {
    parse_policy_with(text, &ParseOptions::default())
}

pub fn parse_policy_with(text: &str, options: &ParseOptions) -> Result<Policy, Vec<ParseError>> {
    let lines: Vec<&str> = text.lines().collect();
    let snippet = |line: usize| lines.get(line.wrapping_sub(1)).copied().unwrap_or("").to_owned();
    let error_at = |line: usize, column: usize, message: String| ParseError {
        line,
        column,
        message,
        snippet: snippet(line),
    };

    let tokens = tokenize(text);
    let mut builder = PolicyBuilder::new().strict(options.strict);
    let mut errors = Vec::new();

    for stmt in tokens.split_inclusive(|t| t.kind == TokKind::Semi) {
        let (body, terminated) = match stmt.split_last() {
            Some((last, body)) if last.kind == TokKind::Semi => (body, true),
            _ => (stmt, false),
        };
        let first = stmt[0];
        if !terminated {
            let last = stmt[stmt.len() - 1];
            errors.push(error_at(
                last.line,
                last.column,
                "statement is missing its terminating `;`".into(),
            ));
            continue;
        }
        if body.is_empty() {
            errors.push(error_at(first.line, first.column, "empty statement".into()));
            continue;
        }
        let origin = Origin::new(options.file.clone(), first.line);
        let mut st = Statement {
            text,
            tokens: body,
            pos: 0,
            end: stmt[stmt.len() - 1],
        };
        let result = st
            .parse()
            .and_then(|parsed| apply(&mut builder, parsed, origin).map_err(|e| Failure::at(first, e.to_string())));
        if let Err(f) = result {
            errors.push(error_at(f.line, f.column, f.message));
        }
    }

    match builder.build() {
        Ok(policy) if errors.is_empty() => Ok(policy),
        Ok(_) => Err(errors),
        Err(model_errors) => {
            errors.extend(model_errors.into_iter().map(|e| {
                let line = e.origin().map_or(1, |o| o.line.max(1));
                error_at(line, 1, e.to_string())
            }));
            errors.sort_by_key(|e| (e.line, e.column));
            Err(errors)
        }
    }
}

enum Parsed {
    Class(String, Vec<String>),
    Sid(String, Option<SecurityContext>),
    Attribute(String),
    Type(String, Vec<String>),
    TypeAttribute(String, Vec<String>),
    Rule(RuleKind, TypeSetExpr, TypeSetExpr, AccessVector),
    Transition(String, String, String, String),
    Genfs(String, String, SecurityContext),
}

fn apply(builder: &mut PolicyBuilder, parsed: Parsed, origin: Origin) -> Result<(), ModelError> {
    match parsed {
        Parsed::Class(name, perms) => {
            builder.class(name, perms);
        }
        Parsed::Sid(name, context) => {
            builder.sid(InitialSid { name, context })?;
        }
        Parsed::Attribute(name) => {
            builder.attribute(name, origin)?;
        }
        Parsed::Type(name, attrs) => {
            builder.declare_type(name, attrs, origin)?;
        }
        Parsed::TypeAttribute(name, attrs) => {
            builder.typeattribute(name, attrs, origin);
        }
        Parsed::Rule(kind, source, target, av) => {
            builder.rule(AvRule {
                kind,
                source,
                target,
                av,
                origin,
            })?;
        }
        Parsed::Transition(subject, object, class, result) => {
            builder.transition(TypeTransitionRule::new(subject, object, class, result).with_origin(origin));
        }
        Parsed::Genfs(filesystem, path, context) => {
            builder.genfs(GenfsContext {
                filesystem,
                path,
                context,
            })?;
        }
    }
    Ok(())
}

impl TypeTransitionRule {
    fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }
}

struct Failure {
    line: usize,
    column: usize,
    message: String,
}

impl Failure {
    fn at(tok: Token<'_>, message: impl Into<String>) -> Self {
        Self {
            line: tok.line,
            column: tok.column,
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Position {
    Source,
    Target,
}

struct Statement<'s, 't> {
    text: &'s str,
    tokens: &'t [Token<'s>],
    pos: usize,
    /// The terminating `;`, used to locate "unexpected end" errors.
    end: Token<'s>,
}

impl<'s> Statement<'s, '_> {
    fn peek(&self) -> Option<Token<'s>> {
        self.tokens.get(self.pos).copied()
    }

    fn here(&self) -> Token<'s> {
        self.peek().unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Token<'s>> {
        let tok = self.peek();
        self.pos += 1;
        tok
    }

    fn fail<T>(&self, message: impl fmt::Display) -> Result<T, Failure> {
        let tok = self.here();
        let found = match self.peek() {
            Some(t) => format!("`{}`", t.text),
            None => "`;`".to_owned(),
        };
        Err(Failure::at(tok, format!("{message}, found {found}")))
    }

    fn eat(&mut self, kind: TokKind) -> bool {
        if self.peek().is_some_and(|t| t.kind == kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokKind, what: &str) -> Result<(), Failure> {
        if self.eat(kind) {
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, Failure> {
        match self.peek() {
            Some(t) if t.kind == TokKind::Word && is_identifier(t.text) && t.text != "self" => {
                self.pos += 1;
                Ok(t.text.to_owned())
            }
            _ => self.fail(format!("expected {what}")),
        }
    }

    fn finish(&self) -> Result<(), Failure> {
        if self.pos < self.tokens.len() {
            return self.fail("expected `;`");
        }
        Ok(())
    }

    fn parse(&mut self) -> Result<Parsed, Failure> {
        let keyword = self.next().expect("statement body is nonempty");
        if keyword.kind != TokKind::Word {
            return Err(Failure::at(
                keyword,
                format!("expected a statement keyword, found `{}`", keyword.text),
            ));
        }
        let parsed = match keyword.text {
            "class" => {
                let name = self.ident("class name")?;
                let mut perms = Vec::new();
                if self.eat(TokKind::LBrace) {
                    while !self.eat(TokKind::RBrace) {
                        perms.push(self.ident("permission name or `}`")?);
                    }
                }
                Parsed::Class(name, perms)
            }
            "sid" => {
                let name = self.ident("SID name")?;
                let context = if self.pos < self.tokens.len() {
                    Some(self.context()?)
                } else {
                    None
                };
                Parsed::Sid(name, context)
            }
            "attribute" => Parsed::Attribute(self.ident("attribute name")?),
            "type" => {
                let name = self.ident("type name")?;
                let mut attrs = Vec::new();
                while self.eat(TokKind::Comma) {
                    attrs.push(self.ident("attribute name")?);
                }
                Parsed::Type(name, attrs)
            }
            "typeattribute" => {
                let name = self.ident("type name")?;
                let mut attrs = vec![self.ident("attribute name")?];
                while self.eat(TokKind::Comma) {
                    attrs.push(self.ident("attribute name")?);
                }
                Parsed::TypeAttribute(name, attrs)
            }
            "allow" | "neverallow" => {
                let kind = if keyword.text == "allow" {
                    RuleKind::Allow
                } else {
                    RuleKind::Neverallow
                };
                let source = self.type_set(Position::Source)?;
                let target = self.type_set(Position::Target)?;
                self.expect(TokKind::Colon, "`:`")?;
                let class = self.ident("class name")?;
                let perms = self.perms()?;
                Parsed::Rule(kind, source, target, AccessVector::new(class, perms))
            }
            "type_transition" => {
                let subject = self.ident("source type")?;
                let object = self.ident("target type")?;
                self.expect(TokKind::Colon, "`:`")?;
                let class = self.ident("class name")?;
                let result = self.ident("result type")?;
                Parsed::Transition(subject, object, class, result)
            }
            "genfscon" => {
                let fs = self.ident("filesystem name")?;
                let path = match self.peek() {
                    Some(t) if t.kind == TokKind::Word && t.text.starts_with('/') => {
                        self.pos += 1;
                        t.text.to_owned()
                    }
                    _ => return self.fail("expected an absolute path"),
                };
                Parsed::Genfs(fs, path, self.context()?)
            }
            other => {
                return Err(Failure::at(keyword, format!("unknown statement `{other}`")));
            }
        };
        self.finish()?;
        Ok(parsed)
    }

    fn type_set(&mut self, position: Position) -> Result<TypeSetExpr, Failure> {
        let what = "type, attribute, `{`, or `*`";
        match self.peek() {
            Some(t) if t.kind == TokKind::Star => {
                self.pos += 1;
                Ok(TypeSetExpr::All)
            }
            Some(t) if t.kind == TokKind::Tilde => self.fail("the `~` complement operator is not supported"),
            Some(t) if t.kind == TokKind::Word && t.text == "self" => {
                if position == Position::Source {
                    return self.fail("`self` is only allowed as a target");
                }
                self.pos += 1;
                Ok(TypeSetExpr::SelfTarget)
            }
            Some(t) if t.kind == TokKind::LBrace => {
                self.pos += 1;
                let mut positives = Vec::new();
                let mut negatives = Vec::new();
                loop {
                    match self.peek() {
                        Some(t) if t.kind == TokKind::RBrace => {
                            self.pos += 1;
                            break;
                        }
                        Some(t) if t.kind == TokKind::Minus => {
                            self.pos += 1;
                            negatives.push(self.ident("type or attribute after `-`")?);
                        }
                        Some(t) if t.kind == TokKind::Tilde => {
                            return self.fail("the `~` complement operator is not supported");
                        }
                        Some(t) if t.kind == TokKind::Star || t.text == "self" => {
                            return self.fail("only explicit types and attributes may appear in braces");
                        }
                        _ => positives.push(self.ident("type, attribute, `-`, or `}`")?),
                    }
                }
                if positives.is_empty() {
                    return Err(Failure::at(t, "a braced set needs at least one positive member"));
                }
                Ok(TypeSetExpr::set(positives, negatives))
            }
            _ => Ok(TypeSetExpr::Single(self.ident(what)?)),
        }
    }

    fn perms(&mut self) -> Result<Perms, Failure> {
        if self.eat(TokKind::Star) {
            return Ok(Perms::All);
        }
        if self.peek().is_some_and(|t| t.kind == TokKind::Tilde) {
            return self.fail("the `~` complement operator is not supported");
        }
        if self.eat(TokKind::LBrace) {
            let open = self.tokens[self.pos - 1];
            let mut perms = Vec::new();
            while !self.eat(TokKind::RBrace) {
                perms.push(self.ident("permission name or `}`")?);
            }
            if perms.is_empty() {
                return Err(Failure::at(open, "empty permission set"));
            }
            return Ok(Perms::of(perms));
        }
        Ok(Perms::of([self.ident("permission, `{`, or `*`")?]))
    }

    /// A security context spans several tokens (`u`, `:`, `r`, ...) that must
    /// be adjacent in the source; it runs to the end of the statement.
    fn context(&mut self) -> Result<SecurityContext, Failure> {
        let first = self.here();
        let rest = &self.tokens[self.pos..];
        if rest.is_empty() {
            return self.fail("expected a security context");
        }
        if rest.windows(2).any(|w| w[0].end != w[1].start) {
            return Err(Failure::at(first, "security context must not contain whitespace"));
        }
        let raw = &self.text[rest[0].start..rest[rest.len() - 1].end];
        let ctx = raw
            .parse::<SecurityContext>()
            .map_err(|e| Failure::at(first, e.to_string()))?;
        self.pos = self.tokens.len();
        Ok(ctx)
    }
}
