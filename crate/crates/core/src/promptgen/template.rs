//! The instruction prompt template and its single-pass renderer.

use std::sync::OnceLock;

/// Version 1 of the instruction template, stored verbatim in the repo.
pub const TEMPLATE_V1: &str = include_str!("../../templates/tqa_prompt_v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Context,
    Question,
    Options,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(Slot),
}

/// Parsed template:
/// `<open><system><close><user pieces><inst_end>{answer}<eos>`.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    open: String,
    system: String,
    close: String,
    user: Vec<Piece>,
    inst_end: String,
    eos: String,
}

const SYS_OPEN: &str = "<<SYS>>\n";
const SYS_CLOSE: &str = "\n<</SYS>>\n\n";
const INST_END: &str = " [/INST]";
const ANSWER: &str = "{answer}";

impl PromptTemplate {
    pub fn parse(src: &str) -> Result<Self, String> {
        let src = src.strip_suffix('\n').unwrap_or(src);
        let sys_at = src.find(SYS_OPEN).ok_or("template lacks <<SYS>>")? + SYS_OPEN.len();
        let close_at = src[sys_at..].find(SYS_CLOSE).ok_or("template lacks <</SYS>>")? + sys_at;
        let user_at = close_at + SYS_CLOSE.len();
        let inst_at = src[user_at..].find(INST_END).ok_or("template lacks [/INST]")? + user_at;
        let after = &src[inst_at + INST_END.len()..];
        let eos = after
            .strip_prefix(ANSWER)
            .ok_or("template must place {answer} right after [/INST]")?;
        Ok(PromptTemplate {
            open: src[..sys_at].to_string(),
            system: src[sys_at..close_at].to_string(),
            close: src[close_at..user_at].to_string(),
            user: parse_pieces(&src[user_at..inst_at])?,
            inst_end: INST_END.to_string(),
            eos: eos.to_string(),
        })
    }

    pub fn v1() -> &'static PromptTemplate {
        static V1: OnceLock<PromptTemplate> = OnceLock::new();
        V1.get_or_init(|| PromptTemplate::parse(TEMPLATE_V1).expect("bundled template parses"))
    }

    /// System instruction text (inside the `<<SYS>>` block).
    pub fn system(&self) -> &str {
        &self.system
    }

    /// The user turn: context, question, options and the answer cue.
    pub fn render_user(&self, context: &str, question: &str, options: &str) -> String {
        let mut out = String::with_capacity(context.len() + question.len() + options.len() + 64);
        for piece in &self.user {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(Slot::Context) => out.push_str(context),
                Piece::Slot(Slot::Question) => out.push_str(question),
                Piece::Slot(Slot::Options) => out.push_str(options),
            }
        }
        out
    }

    /// Complete raw prompt, ending at the instruction close.
    pub fn render(&self, context: &str, question: &str, options: &str) -> String {
        let mut out = String::new();
        out.push_str(&self.open);
        out.push_str(&self.system);
        out.push_str(&self.close);
        out.push_str(&self.render_user(context, question, options));
        out.push_str(&self.inst_end);
        out
    }

    /// Appends the answer and end-of-sequence marker to a rendered prompt.
    pub fn with_answer(&self, prompt: &str, answer: &str) -> String {
        format!("{prompt}{answer}{}", self.eos)
    }
}

fn parse_pieces(src: &str) -> Result<Vec<Piece>, String> {
    let mut pieces = Vec::new();
    let mut rest = src;
    while let Some(start) = rest.find('{') {
        let end = rest[start..]
            .find('}')
            .ok_or_else(|| format!("unclosed placeholder in `{rest}`"))?
            + start;
        if start > 0 {
            pieces.push(Piece::Text(rest[..start].to_string()));
        }
        let slot = match &rest[start + 1..end] {
            "context" => Slot::Context,
            "question" => Slot::Question,
            "options" => Slot::Options,
            other => return Err(format!("unknown placeholder {{{other}}}")),
        };
        pieces.push(Piece::Slot(slot));
        rest = &rest[end + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest.to_string()));
    }
    Ok(pieces)
}
