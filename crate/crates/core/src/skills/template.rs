//! `{key}` prompt templates rendered from a context. `{{` and `}}` are
//! literal braces.

use crate::skill::TemplateError;
use crate::value::Context;

pub const SUMMARIZE: &str = "Summarize the following content concisely.\n\n{text}";
pub const BLOG_POST: &str =
    "Write a blog post based on the following outline.\n\n{outline}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

#[derive(Debug, PartialEq, Eq)]
enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn is_template_name(s: &str) -> bool {
    crate::skill::validate_skill_name(s).is_ok()
}

impl PromptTemplate {
    pub fn builtin(name: &str) -> Option<Self> {
        let body = match name {
            "summarize" => SUMMARIZE,
            "blog_post" => BLOG_POST,
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            body: body.to_string(),
        })
    }

    /// A built-in name, or an inline body. Bare identifiers that are not
    /// built-in names are rejected as unknown templates.
    pub fn resolve(spec: &str) -> Result<Self, TemplateError> {
        if let Some(t) = Self::builtin(spec) {
            return Ok(t);
        }
        if is_template_name(spec) {
            return Err(TemplateError::UnknownTemplate(spec.to_string()));
        }
        let template = Self {
            name: "inline".into(),
            body: spec.to_string(),
        };
        template.pieces()?;
        Ok(template)
    }

    fn pieces(&self) -> Result<Vec<Piece<'_>>, TemplateError> {
        let body = self.body.as_str();
        let bytes = body.as_bytes();
        let mut pieces = Vec::new();
        let mut literal_start = 0;
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'{' if bytes.get(i + 1) == Some(&b'{') => {
                    pieces.push(Piece::Literal(&body[literal_start..=i]));
                    i += 2;
                    literal_start = i;
                }
                b'}' if bytes.get(i + 1) == Some(&b'}') => {
                    pieces.push(Piece::Literal(&body[literal_start..=i]));
                    i += 2;
                    literal_start = i;
                }
                b'{' => {
                    let close = body[i + 1..]
                        .find('}')
                        .ok_or(TemplateError::Unterminated(i))?;
                    pieces.push(Piece::Literal(&body[literal_start..i]));
                    pieces.push(Piece::Placeholder(&body[i + 1..i + 1 + close]));
                    i += close + 2;
                    literal_start = i;
                }
                _ => i += 1,
            }
        }
        pieces.push(Piece::Literal(&body[literal_start..]));
        Ok(pieces)
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Result<Vec<String>, TemplateError> {
        let mut names: Vec<String> = Vec::new();
        for piece in self.pieces()? {
            if let Piece::Placeholder(p) = piece {
                if !names.iter().any(|n| n == p) {
                    names.push(p.to_string());
                }
            }
        }
        Ok(names)
    }

    /// Substitutes every placeholder from the context. Text values render
    /// raw; other values render as canonical JSON.
    pub fn render(&self, context: &Context) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in self.pieces()? {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Placeholder(key) => {
                    let value = context
                        .get(key)
                        .ok_or_else(|| TemplateError::Unresolved(key.to_string()))?;
                    out.push_str(&value.to_string());
                }
            }
        }
        Ok(out)
    }
}
