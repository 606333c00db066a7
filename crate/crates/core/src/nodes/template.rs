use crate::flow::Message;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Placeholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("\"{{{{\" at position {0} is never closed")]
    Unclosed(usize),
    #[error("empty placeholder at position {0}")]
    Empty(usize),
    #[error("\"}}}}\" at position {0} has no matching \"{{{{\"")]
    StrayClose(usize),
}

/// Text with `{{name}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut rest = source;
        let mut offset = 0;
        loop {
            let open = rest.find("{{");
            let close = rest.find("}}");
            match (open, close) {
                (None, None) => break,
                (None, Some(c)) => return Err(TemplateError::StrayClose(offset + c)),
                (Some(o), Some(c)) if c < o => return Err(TemplateError::StrayClose(offset + c)),
                (Some(o), _) => {
                    let inner_start = o + 2;
                    let Some(len) = rest[inner_start..].find("}}") else {
                        return Err(TemplateError::Unclosed(offset + o));
                    };
                    let inner = &rest[inner_start..inner_start + len];
                    if inner.contains("{{") {
                        return Err(TemplateError::Unclosed(offset + o));
                    }
                    let name = inner.trim();
                    if name.is_empty() {
                        return Err(TemplateError::Empty(offset + o));
                    }
                    if o > 0 {
                        segments.push(Segment::Literal(rest[..o].to_string()));
                    }
                    segments.push(Segment::Placeholder(name.to_string()));
                    let consumed = inner_start + len + 2;
                    rest = &rest[consumed..];
                    offset += consumed;
                }
            }
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(rest.to_string()));
        }
        Ok(Template { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Renders against a message. Lookup order per placeholder: message
    /// metadata, then an entry of a map payload, then the payload itself for
    /// `{{payload}}`. Unresolved names render as empty text and are returned.
    pub fn render(&self, msg: &Message) -> (String, Vec<String>) {
        let mut out = String::new();
        let mut unknown = Vec::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Placeholder(name) => {
                    if let Some(v) = msg.meta.get(name) {
                        out.push_str(v);
                    } else if let Some(v) = msg.payload.as_map().and_then(|m| m.get(name)) {
                        out.push_str(&v.to_string());
                    } else if name == "payload" {
                        out.push_str(&msg.payload.to_string());
                    } else {
                        unknown.push(name.clone());
                    }
                }
            }
        }
        (out, unknown)
    }
}
