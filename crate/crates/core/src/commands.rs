//! `/tdbot` comment commands.
//!
//! A command must occupy the first non-blank line of a comment:
//!
//! ```text
//! /tdbot label            classify the issue and apply the verdict
//! /tdbot label <name>     apply <name> as-is, no classification
//! /tdbot help             reply with the command list
//! ```
//!
//! The `/tdbot` prefix and sub-command are matched case-insensitively; an
//! explicit label is kept verbatim.

pub const PREFIX: &str = "/tdbot";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    LabelAuto,
    LabelExplicit(String),
    Help,
    /// Addressed to the bot but not understood; the bot answers with a hint.
    Unknown(String),
}

/// Reply posted for [`Command::Unknown`].
pub const UNKNOWN_COMMAND_REPLY: &str = "Unknown command; try /tdbot help";

const DOCS_REF: &str = "README.md (\"Configuration\" and \"Commands\" sections) in the bot's source repository";

pub fn parse_command(comment_body: &str) -> Option<Command> {
    let line = comment_body.trim_start().lines().next()?.trim();
    let (head, rest) = split_word(line);
    if !head.eq_ignore_ascii_case(PREFIX) {
        return None;
    }
    let (sub, args) = split_word(rest);
    let cmd = if sub.eq_ignore_ascii_case("label") {
        if args.is_empty() {
            Command::LabelAuto
        } else {
            Command::LabelExplicit(args.to_string())
        }
    } else if sub.eq_ignore_ascii_case("help") && args.is_empty() {
        Command::Help
    } else {
        Command::Unknown(rest.to_string())
    };
    Some(cmd)
}

/// First whitespace-delimited word and the trimmed remainder.
fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim();
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim()),
        None => (s, ""),
    }
}

pub fn help_text() -> String {
    let mut out = String::new();
    out.push_str("**tdbot commands**\n\n");
    out.push_str("Write the command on the first line of a comment.\n\n");
    out.push_str("- `/tdbot label`: classify this issue for self-admitted technical debt and apply `TD` or `non-TD`.\n");
    out.push_str("- `/tdbot label <name>`: apply the label `<name>` directly, without classification.\n");
    out.push_str("- `/tdbot help`: show this message.\n\n");
    out.push_str("The bot does not reply after labeling; the new label on the issue is the confirmation.\n");
    out.push_str("Settings are read from `Bot/config.json` on the default branch.\n\n");
    out.push_str(&format!("Documentation: {DOCS_REF}\n"));
    out
}

pub fn welcome_text() -> &'static str {
    include_str!("../assets/welcome_comment.md")
}
