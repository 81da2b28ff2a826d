use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    Agent,
    Operator,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    /// Logical session clock, seconds.
    pub t: f64,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>, t: f64) -> Self {
        Self {
            role,
            content: content.into(),
            t,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content, 0.0)
    }
}

/// Wraps a JSON payload in a ```json fence.
pub fn fence(value: &impl Serialize) -> String {
    format!(
        "```json\n{}\n```",
        serde_json::to_string(value).expect("payload serializes")
    )
}

/// The contents of the last ```json fenced block in `text`, if any.
pub fn fenced_json(text: &str) -> Option<&str> {
    let start = text.rfind("```json")? + "```json".len();
    let rest = &text[start..];
    let end = rest.find("```")?;
    Some(rest[..end].trim())
}
