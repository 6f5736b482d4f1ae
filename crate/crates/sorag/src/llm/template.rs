//! Prompt templates with named placeholders.
//!
//! Default texts ship as editable files under `templates/` in the crate
//! root and are compiled in as fallbacks; [`TemplateSet::load_dir`]
//! overrides any of them from role-named files in a directory.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LlmError;

/// The prompt roles the engine and harness use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    Hyde,
    AnswerZeroShot,
    AnswerWithContext,
    Judge,
    SyntheticQuestion,
}

impl PromptRole {
    pub const ALL: [PromptRole; 5] = [
        PromptRole::Hyde,
        PromptRole::AnswerZeroShot,
        PromptRole::AnswerWithContext,
        PromptRole::Judge,
        PromptRole::SyntheticQuestion,
    ];

    /// Stable name, also the stem of the template file for the role.
    pub fn name(self) -> &'static str {
        match self {
            PromptRole::Hyde => "hyde",
            PromptRole::AnswerZeroShot => "answer_zero_shot",
            PromptRole::AnswerWithContext => "answer_with_context",
            PromptRole::Judge => "judge",
            PromptRole::SyntheticQuestion => "synthetic_question",
        }
    }

    /// Placeholders that must appear in a template for this role.
    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            PromptRole::Hyde => &["{question}"],
            PromptRole::AnswerZeroShot => &["{question}"],
            PromptRole::AnswerWithContext => &["{question}", "{context}"],
            PromptRole::Judge => &["{question}", "{answer}"],
            PromptRole::SyntheticQuestion => &["{question}"],
        }
    }

    fn default_text(self) -> &'static str {
        match self {
            PromptRole::Hyde => include_str!("../../templates/hyde.txt"),
            PromptRole::AnswerZeroShot => include_str!("../../templates/answer_zero_shot.txt"),
            PromptRole::AnswerWithContext => {
                include_str!("../../templates/answer_with_context.txt")
            }
            PromptRole::Judge => include_str!("../../templates/judge.txt"),
            PromptRole::SyntheticQuestion => {
                include_str!("../../templates/synthetic_question.txt")
            }
        }
    }
}

impl fmt::Display for PromptRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A template text bound to a role, checked to contain the role's
/// required placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    role: PromptRole,
    template_text: String,
}

impl PromptTemplate {
    pub fn new(role: PromptRole, template_text: impl Into<String>) -> Result<Self, LlmError> {
        let template_text = template_text.into();
        for placeholder in role.required_placeholders() {
            if !template_text.contains(placeholder) {
                return Err(LlmError::MissingPlaceholder {
                    role: role.name(),
                    placeholder,
                });
            }
        }
        Ok(PromptTemplate {
            role,
            template_text,
        })
    }

    pub fn role(&self) -> PromptRole {
        self.role
    }

    pub fn text(&self) -> &str {
        &self.template_text
    }

    /// Substitutes `{question}`, `{context}` and `{answer}`. A
    /// placeholder present in the text without a value supplied here is
    /// a configuration error; unused values are ignored.
    pub fn render(
        &self,
        question: &str,
        context: Option<&str>,
        answer: Option<&str>,
    ) -> Result<String, LlmError> {
        let mut out = self.template_text.clone();
        let bindings = [
            ("{question}", Some(question)),
            ("{context}", context),
            ("{answer}", answer),
        ];
        for (placeholder, value) in bindings {
            if !out.contains(placeholder) {
                continue;
            }
            match value {
                Some(v) => out = out.replace(placeholder, v),
                None => {
                    return Err(LlmError::Config(format!(
                        "{} template uses {placeholder} but no value was supplied",
                        self.role
                    )))
                }
            }
        }
        Ok(out)
    }
}

/// One template per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub hyde: PromptTemplate,
    pub answer_zero_shot: PromptTemplate,
    pub answer_with_context: PromptTemplate,
    pub judge: PromptTemplate,
    pub synthetic_question: PromptTemplate,
}

impl TemplateSet {
    /// The compiled-in defaults.
    pub fn builtin() -> Self {
        let make = |role: PromptRole| {
            PromptTemplate::new(role, role.default_text())
                .expect("built-in templates carry their placeholders")
        };
        TemplateSet {
            hyde: make(PromptRole::Hyde),
            answer_zero_shot: make(PromptRole::AnswerZeroShot),
            answer_with_context: make(PromptRole::AnswerWithContext),
            judge: make(PromptRole::Judge),
            synthetic_question: make(PromptRole::SyntheticQuestion),
        }
    }

    /// Loads role-named files (`hyde.txt`, `judge.txt`, ...) from `dir`,
    /// keeping the built-in default for any file that is absent.
    pub fn load_dir(dir: &Path) -> Result<Self, LlmError> {
        let mut set = TemplateSet::builtin();
        for role in PromptRole::ALL {
            let path = dir.join(format!("{}.txt", role.name()));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            *set.slot_mut(role) = PromptTemplate::new(role, text)?;
        }
        Ok(set)
    }

    pub fn for_role(&self, role: PromptRole) -> &PromptTemplate {
        match role {
            PromptRole::Hyde => &self.hyde,
            PromptRole::AnswerZeroShot => &self.answer_zero_shot,
            PromptRole::AnswerWithContext => &self.answer_with_context,
            PromptRole::Judge => &self.judge,
            PromptRole::SyntheticQuestion => &self.synthetic_question,
        }
    }

    fn slot_mut(&mut self, role: PromptRole) -> &mut PromptTemplate {
        match role {
            PromptRole::Hyde => &mut self.hyde,
            PromptRole::AnswerZeroShot => &mut self.answer_zero_shot,
            PromptRole::AnswerWithContext => &mut self.answer_with_context,
            PromptRole::Judge => &mut self.judge,
            PromptRole::SyntheticQuestion => &mut self.synthetic_question,
        }
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_validate() {
        let set = TemplateSet::builtin();
        for role in PromptRole::ALL {
            let template = set.for_role(role);
            assert_eq!(template.role(), role);
            for placeholder in role.required_placeholders() {
                assert!(template.text().contains(placeholder), "{role} lacks {placeholder}");
            }
        }
    }

    #[test]
    fn missing_placeholder_is_rejected() {
        let err = PromptTemplate::new(PromptRole::Hyde, "no placeholder here").unwrap_err();
        match err {
            LlmError::MissingPlaceholder { role, placeholder } => {
                assert_eq!(role, "hyde");
                assert_eq!(placeholder, "{question}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn render_is_pure_substitution() {
        let template =
            PromptTemplate::new(PromptRole::Judge, "Q:{question} A:{answer} Score:").unwrap();
        let a = template.render("why", None, Some("because")).unwrap();
        let b = template.render("why", None, Some("because")).unwrap();
        assert_eq!(a, "Q:why A:because Score:");
        assert_eq!(a, b);
    }

    #[test]
    fn render_without_required_value_fails() {
        let template = TemplateSet::builtin().answer_with_context;
        let err = template.render("q", None, None).unwrap_err();
        assert!(matches!(err, LlmError::Config(_)));
    }

    #[test]
    fn load_dir_overrides_only_present_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("hyde.txt"), "custom {question}").unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.hyde.text(), "custom {question}");
        assert_eq!(set.judge, TemplateSet::builtin().judge);
    }

    #[test]
    fn load_dir_rejects_bad_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("judge.txt"), "no placeholders").unwrap();
        assert!(TemplateSet::load_dir(dir.path()).is_err());
    }
}
