//! Prompt template parsing and staged rendering.
//!
//! A template is plain text in instruction-turn form with four slots:
//! `{tweet}`, `{translation}`, `{reason}` and `{decision}`. The lines before
//! the `{tweet}` line hold the instruction block followed by worked examples,
//! each a tweet line and an answer line. Each remaining slot sits on its own
//! line after the target tweet, in the order translation, reason, decision.

use serde::{Deserialize, Serialize};

use crate::corpus::StanceLabel;

/// The bundled default template.
pub const DEFAULT_TEMPLATE: &str = include_str!("../../prompts/onelove_mistral.txt");

const OPEN: &str = "[INST]";
const CLOSERS: [&str; 2] = ["[/INST]", "[\\INST]"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("template line {line}: {message}")]
pub struct TemplateError {
    pub line: usize,
    pub message: String,
}

fn terr(line: usize, message: impl Into<String>) -> TemplateError {
    TemplateError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotExample {
    pub tweet_text: String,
    pub label: StanceLabel,
}

/// Text around a slot on its line.
#[derive(Debug, Clone, PartialEq, Eq)]
struct SlotLine {
    prefix: String,
    suffix: String,
}

/// The fixed scaffolding of a parsed template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    open: String,
    instructions: String,
    tweet_prefix: String,
    tweet_suffix: String,
    answer_prefix: String,
    shots: Vec<ShotExample>,
    translation: SlotLine,
    reason: SlotLine,
    decision: SlotLine,
}

fn split_slot(line: &str, slot: &str, lineno: usize) -> Result<SlotLine, TemplateError> {
    let (prefix, suffix) = line
        .split_once(slot)
        .ok_or_else(|| terr(lineno, format!("expected slot {slot}")))?;
    if suffix.contains(slot) {
        return Err(terr(lineno, format!("slot {slot} occurs twice")));
    }
    Ok(SlotLine {
        prefix: prefix.to_string(),
        suffix: suffix.to_string(),
    })
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let lines: Vec<&str> = text.split('\n').collect();
        let find = |slot: &str| -> Result<usize, TemplateError> {
            let hits: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].contains(slot)).collect();
            match hits.as_slice() {
                [i] => Ok(*i),
                [] => Err(terr(0, format!("missing slot {slot}"))),
                [_, second, ..] => Err(terr(second + 1, format!("slot {slot} occurs twice"))),
            }
        };
        let t = find("{tweet}")?;
        let tr = find("{translation}")?;
        let re = find("{reason}")?;
        let de = find("{decision}")?;
        if !(t < tr && tr < re && re < de) {
            return Err(terr(
                t + 1,
                "slots must appear in the order {tweet}, {translation}, {reason}, {decision}",
            ));
        }
        if tr != t + 1 || re != tr + 1 || de != re + 1 {
            return Err(terr(t + 1, "slot lines must be consecutive"));
        }
        if lines[de + 1..].iter().any(|l| !l.is_empty()) {
            return Err(terr(de + 2, "unexpected text after the {decision} line"));
        }

        let open = if lines[0].starts_with(OPEN) {
            let rest = &lines[0][OPEN.len()..];
            let ws = rest.len() - rest.trim_start_matches(' ').len();
            lines[0][..OPEN.len() + ws].to_string()
        } else {
            String::new()
        };

        let target = lines[t]
            .strip_prefix(open.as_str())
            .ok_or_else(|| terr(t + 1, format!("tweet line must start with `{open}`")))?;
        let slot = split_slot(target, "{tweet}", t + 1)?;
        let (tweet_prefix, tweet_suffix) = (slot.prefix, slot.suffix);
        if tweet_prefix.is_empty() {
            return Err(terr(t + 1, "tweet line needs a prefix before {tweet}"));
        }

        let strip_open = |l: &'_ str| l.strip_prefix(open.as_str()).unwrap_or(l).to_string();
        let first_shot = (0..t)
            .find(|&i| strip_open(lines[i]).starts_with(&tweet_prefix))
            .ok_or_else(|| terr(1, "template needs at least one worked example before {tweet}"))?;
        if first_shot == 0 {
            return Err(terr(1, "template needs an instruction block before the first example"));
        }
        let shot_lines = &lines[first_shot..t];
        if !shot_lines.len().is_multiple_of(2) {
            return Err(terr(t, "every example needs a tweet line and an answer line"));
        }

        let mut shots = Vec::new();
        let mut answer_prefix: Option<String> = None;
        for (k, pair) in shot_lines.chunks(2).enumerate() {
            let lineno = first_shot + 2 * k + 1;
            let tweet_line = if k == 0 {
                pair[0].to_string()
            } else {
                pair[0]
                    .strip_prefix(open.as_str())
                    .ok_or_else(|| terr(lineno, format!("example line must start with `{open}`")))?
                    .to_string()
            };
            let tweet_text = tweet_line
                .strip_prefix(&tweet_prefix)
                .and_then(|r| r.strip_suffix(&tweet_suffix))
                .ok_or_else(|| terr(lineno, "example line does not match the tweet line format"))?;
            if tweet_text.is_empty() {
                return Err(terr(lineno, "empty example tweet"));
            }
            let answer = pair[1];
            let label = StanceLabel::ALL
                .iter()
                .copied()
                .find(|l| answer.ends_with(l.decision_str()))
                .ok_or_else(|| terr(lineno + 1, "answer line does not end with a label"))?;
            let prefix = &answer[..answer.len() - label.decision_str().len()];
            match &answer_prefix {
                None => answer_prefix = Some(prefix.to_string()),
                Some(p) if p == prefix => {}
                Some(_) => return Err(terr(lineno + 1, "answer lines use different prefixes")),
            }
            shots.push(ShotExample {
                tweet_text: tweet_text.to_string(),
                label,
            });
        }

        let head = lines[..first_shot].join("\n") + "\n";
        let instructions = head[open.len()..].to_string();

        Ok(PromptTemplate {
            open,
            instructions,
            tweet_prefix,
            tweet_suffix,
            answer_prefix: answer_prefix.expect("at least one example"),
            shots,
            translation: split_slot(lines[tr], "{translation}", tr + 1)?,
            reason: split_slot(lines[re], "{reason}", re + 1)?,
            decision: split_slot(lines[de], "{decision}", de + 1)?,
        })
    }

    pub fn bundled() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }

    /// The instruction block, without the turn opener.
    pub fn instructions(&self) -> &str {
        &self.instructions
    }

    /// The worked examples embedded in the template.
    pub fn shots(&self) -> &[ShotExample] {
        &self.shots
    }

    pub fn answer_prefix(&self) -> &str {
        &self.answer_prefix
    }
}

/// A pipeline stage that calls the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Translation,
    Reasoning,
    Decision,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Translation => "translation",
            Stage::Reasoning => "reasoning",
            Stage::Decision => "decision",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    Base,
    ThreeShot,
    Translation,
    Cot,
    All,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 5] = [
        PromptVariant::Base,
        PromptVariant::ThreeShot,
        PromptVariant::Translation,
        PromptVariant::Cot,
        PromptVariant::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Base => "base",
            PromptVariant::ThreeShot => "three-shot",
            PromptVariant::Translation => "translation",
            PromptVariant::Cot => "cot",
            PromptVariant::All => "all",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.as_str() == raw)
    }

    /// `(examples, translation, reasoning)` switches of this preset.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            PromptVariant::Base => (false, false, false),
            PromptVariant::ThreeShot => (true, false, false),
            PromptVariant::Translation => (false, true, false),
            PromptVariant::Cot => (false, false, true),
            PromptVariant::All => (true, true, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("the {0} stage output is missing; run that stage first")]
    MissingStage(Stage),
    #[error("the {0} stage is disabled in this prompt")]
    StageDisabled(Stage),
    #[error("label strings must be exactly supportive, against, neutral")]
    Labels,
    #[error("example {0} has empty text")]
    EmptyShot(usize),
}

/// Which instructions, examples and stages make up a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    template: PromptTemplate,
    pub base_instructions: String,
    pub shots: Vec<ShotExample>,
    pub use_translation: bool,
    pub use_cot: bool,
    /// Decision strings, indexed like [`StanceLabel::ALL`].
    pub label_strings: [String; 3],
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec::full(PromptTemplate::bundled())
    }
}

/// Outputs of the stages that already ran for a post.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriorOutputs {
    pub translation: Option<String>,
    pub reasoning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// One rendered prompt, both as the flat template text and as chat turns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRender {
    pub flat: String,
    pub messages: Vec<ChatMessage>,
    /// Assistant text that the answer continues, e.g. the answer-line prefix.
    pub response_prefix: String,
}

impl PromptSpec {
    /// All examples and stages of `template` enabled.
    pub fn full(template: PromptTemplate) -> Self {
        PromptSpec {
            base_instructions: template.instructions.clone(),
            shots: template.shots.clone(),
            use_translation: true,
            use_cot: true,
            label_strings: StanceLabel::decision_strings(),
            template,
        }
    }

    pub fn variant(template: PromptTemplate, variant: PromptVariant) -> Self {
        let mut spec = PromptSpec::full(template);
        let (shots, tr, cot) = variant.flags();
        if !shots {
            spec.shots.clear();
        }
        spec.use_translation = tr;
        spec.use_cot = cot;
        spec
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let mut got: Vec<&str> = self.label_strings.iter().map(String::as_str).collect();
        got.sort_unstable();
        if got != ["against", "neutral", "supportive"] {
            return Err(PromptError::Labels);
        }
        if let Some(i) = self.shots.iter().position(|s| s.tweet_text.is_empty()) {
            return Err(PromptError::EmptyShot(i));
        }
        Ok(())
    }

    pub fn label_string(&self, label: StanceLabel) -> &str {
        let i = StanceLabel::ALL.iter().position(|&l| l == label).expect("closed label set");
        &self.label_strings[i]
    }

    /// Stages that call the backend, in order.
    pub fn stages(&self) -> Vec<Stage> {
        let mut out = Vec::with_capacity(3);
        if self.use_translation {
            out.push(Stage::Translation);
        }
        if self.use_cot {
            out.push(Stage::Reasoning);
        }
        out.push(Stage::Decision);
        out
    }

    /// The flat prompt text for `stage`, ending where the model should
    /// continue.
    pub fn render_flat(&self, post_text: &str, stage: Stage, prior: &PriorOutputs) -> Result<String, PromptError> {
        self.validate()?;
        let t = &self.template;
        let mut out = String::new();
        out.push_str(&t.open);
        out.push_str(&self.base_instructions);
        for (i, shot) in self.shots.iter().enumerate() {
            if i > 0 {
                out.push_str(&t.open);
            }
            out.push_str(&t.tweet_prefix);
            out.push_str(&shot.tweet_text);
            out.push_str(&t.tweet_suffix);
            out.push('\n');
            out.push_str(&t.answer_prefix);
            out.push_str(self.label_string(shot.label));
            out.push('\n');
        }
        if !self.shots.is_empty() {
            out.push_str(&t.open);
        }
        out.push_str(&t.tweet_prefix);
        out.push_str(post_text);
        out.push_str(&t.tweet_suffix);
        out.push('\n');

        let stage_on = |s: Stage| match s {
            Stage::Translation => self.use_translation,
            Stage::Reasoning => self.use_cot,
            Stage::Decision => true,
        };
        if !stage_on(stage) {
            return Err(PromptError::StageDisabled(stage));
        }
        if self.use_translation {
            out.push_str(&t.translation.prefix);
            if stage == Stage::Translation {
                return Ok(out);
            }
            let v = prior.translation.as_deref().ok_or(PromptError::MissingStage(Stage::Translation))?;
            out.push_str(v);
            out.push_str(&t.translation.suffix);
            out.push('\n');
        }
        if self.use_cot {
            out.push_str(&t.reason.prefix);
            if stage == Stage::Reasoning {
                return Ok(out);
            }
            let v = prior.reasoning.as_deref().ok_or(PromptError::MissingStage(Stage::Reasoning))?;
            out.push_str(v);
            out.push_str(&t.reason.suffix);
            out.push('\n');
        }
        if self.use_translation || self.use_cot {
            out.push_str(&t.decision.prefix);
        } else {
            out.push_str(&t.answer_prefix);
        }
        Ok(out)
    }

    pub fn build_prompt(&self, post_text: &str, stage: Stage, prior: &PriorOutputs) -> Result<PromptRender, PromptError> {
        let flat = self.render_flat(post_text, stage, prior)?;
        let (messages, response_prefix) = if self.template.open.is_empty() {
            (
                vec![ChatMessage {
                    role: Role::User,
                    content: flat.clone(),
                }],
                String::new(),
            )
        } else {
            to_messages(&flat)
        };
        Ok(PromptRender {
            flat,
            messages,
            response_prefix,
        })
    }
}

/// Splits instruction-turn text into chat messages. Text inside
/// `[INST] ... [/INST]` is a user turn, text between turns is an assistant
/// turn. Trailing assistant text is returned separately as the prefix the
/// answer continues.
pub fn to_messages(flat: &str) -> (Vec<ChatMessage>, String) {
    let mut messages = Vec::new();
    let mut rest = flat;
    let mut pending = String::new();
    loop {
        let Some(start) = rest.find(OPEN) else {
            pending.push_str(rest);
            break;
        };
        pending.push_str(&rest[..start]);
        let inner = &rest[start + OPEN.len()..];
        let close = CLOSERS
            .iter()
            .filter_map(|c| inner.find(c).map(|i| (i, c.len())))
            .min();
        let (user, after) = match close {
            Some((i, len)) => (&inner[..i], &inner[i + len..]),
            None => (inner, ""),
        };
        let assistant = pending.trim();
        if !assistant.is_empty() {
            messages.push(ChatMessage {
                role: Role::Assistant,
                content: assistant.to_string(),
            });
        }
        pending.clear();
        messages.push(ChatMessage {
            role: Role::User,
            content: user.trim().to_string(),
        });
        rest = after;
        if close.is_none() {
            break;
        }
    }
    (messages, pending.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior(tr: &str, re: &str) -> PriorOutputs {
        PriorOutputs {
            translation: Some(tr.into()),
            reasoning: Some(re.into()),
        }
    }

    #[test]
    fn bundled_template_parses() {
        let t = PromptTemplate::bundled();
        assert_eq!(t.shots().len(), 3);
        assert_eq!(
            t.shots().iter().map(|s| s.label).collect::<Vec<_>>(),
            [StanceLabel::Supportive, StanceLabel::Neutral, StanceLabel::Against]
        );
        assert!(t.instructions().starts_with("Rate German Tweets"));
        assert!(t.instructions().ends_with("the tweet is against.\n\n"));
        assert_eq!(t.answer_prefix(), "Support for wearing the one love binde: ");
    }

    #[test]
    fn full_decision_render_rebuilds_template() {
        let spec = PromptSpec::default();
        let out = spec.render_flat("T", Stage::Decision, &prior("TR", "RE")).unwrap();
        let expected = DEFAULT_TEMPLATE
            .replace("{tweet}", "T")
            .replace("{translation}", "TR")
            .replace("{reason}", "RE");
        let cut = expected.find("{decision}").unwrap();
        assert_eq!(out, expected[..cut]);
    }

    #[test]
    fn zero_shot_base_is_one_message() {
        let spec = PromptSpec::variant(PromptTemplate::bundled(), PromptVariant::Base);
        let r = spec.build_prompt("Hallo", Stage::Decision, &PriorOutputs::default()).unwrap();
        assert_eq!(r.messages.len(), 1);
        assert_eq!(r.messages[0].role, Role::User);
        assert!(r.messages[0].content.contains("Coding instructions:"));
        assert!(r.messages[0].content.ends_with("Tweet: \"Hallo\""));
        assert_eq!(r.response_prefix, "Support for wearing the one love binde:");
        assert!(!r.flat.contains("English translation"));
    }

    #[test]
    fn translation_stage_ends_with_elicitation() {
        let spec = PromptSpec::default();
        let r = spec.render_flat("x", Stage::Translation, &PriorOutputs::default()).unwrap();
        assert!(r.ends_with("English translation:  "));
        assert_eq!(r.matches("Support for wearing the one love binde: ").count(), 3);
    }

    #[test]
    fn missing_and_disabled_stages() {
        let spec = PromptSpec::default();
        assert_eq!(
            spec.render_flat("x", Stage::Reasoning, &PriorOutputs::default()),
            Err(PromptError::MissingStage(Stage::Translation))
        );
        let only = PriorOutputs {
            translation: Some("t".into()),
            reasoning: None,
        };
        assert_eq!(
            spec.render_flat("x", Stage::Decision, &only),
            Err(PromptError::MissingStage(Stage::Reasoning))
        );
        let base = PromptSpec::variant(PromptTemplate::bundled(), PromptVariant::Base);
        assert_eq!(
            base.render_flat("x", Stage::Translation, &PriorOutputs::default()),
            Err(PromptError::StageDisabled(Stage::Translation))
        );
    }

    #[test]
    fn cot_only_uses_decision_turn() {
        let spec = PromptSpec::variant(PromptTemplate::bundled(), PromptVariant::Cot);
        let p = PriorOutputs {
            translation: None,
            reasoning: Some("because".into()),
        };
        let r = spec.build_prompt("x", Stage::Decision, &p).unwrap();
        assert!(r.flat.ends_with("wearing the one love binde:[\\INST] "));
        assert_eq!(r.messages.last().unwrap().role, Role::User);
        assert_eq!(r.messages[r.messages.len() - 2].content, "because");
        assert_eq!(r.response_prefix, "");
    }

    #[test]
    fn message_split_of_full_render() {
        let spec = PromptSpec::default();
        let r = spec.build_prompt("T", Stage::Decision, &prior("TR", "RE")).unwrap();
        let roles: Vec<&Role> = r.messages.iter().map(|m| &m.role).collect();
        use Role::*;
        assert_eq!(
            roles,
            [&User, &Assistant, &User, &Assistant, &User, &Assistant, &User, &Assistant, &User, &Assistant, &User]
        );
        assert_eq!(r.messages[7].content, "English translation:  TR");
    }

    #[test]
    fn label_validation() {
        let mut spec = PromptSpec::default();
        spec.label_strings[0] = "pro".into();
        assert_eq!(spec.validate(), Err(PromptError::Labels));
    }

    #[test]
    fn template_errors() {
        assert!(PromptTemplate::parse("").is_err());
        assert!(PromptTemplate::parse("no slots here").is_err());
        let swapped = DEFAULT_TEMPLATE.replace("{reason}", "{x}").replace("{translation}", "{reason}");
        assert!(PromptTemplate::parse(&swapped).is_err());
        let doubled = DEFAULT_TEMPLATE.replace("{decision}", "{decision}{decision}");
        assert!(PromptTemplate::parse(&doubled).is_err());
    }
}
