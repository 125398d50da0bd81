use regex::Regex;

use super::{Classification, ClassificationInput, Detector, DetectorError, Verdict};

/// The baseline has no calibrated probability; it reports a coin-flip.
pub const HEURISTIC_CONFIDENCE: f64 = 0.5;

const BUILTIN_LEXICON: &str = include_str!("../../assets/satd_lexicon.txt");

/// Phrases that indicate self-admitted technical debt.
#[derive(Debug, Clone)]
pub struct Lexicon {
    phrases: Vec<String>,
    pattern: Option<Regex>,
}

impl Lexicon {
    /// Parses the lexicon file format: one phrase per line, `#` comments,
    /// blank lines ignored. Phrases are lowercased; the words of a phrase
    /// may be separated by any run of whitespace in the matched text.
    pub fn parse(text: &str) -> Self {
        let phrases: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        let pattern = (!phrases.is_empty()).then(|| {
            let alternation = phrases
                .iter()
                .map(|p| {
                    p.split_whitespace()
                        .map(regex::escape)
                        .collect::<Vec<_>>()
                        .join(r"\s+")
                })
                .collect::<Vec<_>>()
                .join("|");
            Regex::new(&format!(r"(?i)\b(?:{alternation})\b")).expect("escaped phrases")
        });
        Self { phrases, pattern }
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICON)
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    /// First phrase found in `text`, if any.
    pub fn find<'t>(&self, text: &'t str) -> Option<&'t str> {
        self.pattern.as_ref()?.find(text).map(|m| m.as_str())
    }
}

/// Offline, deterministic keyword baseline.
#[derive(Debug, Clone)]
pub struct HeuristicDetector {
    lexicon: Lexicon,
}

impl HeuristicDetector {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn builtin() -> Self {
        Self::new(Lexicon::builtin())
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn classify_text(&self, text: &str) -> Classification {
        let label = if self.lexicon.find(text).is_some() {
            Verdict::Td
        } else {
            Verdict::NonTd
        };
        Classification::new(label, Some(HEURISTIC_CONFIDENCE)).expect("constant in range")
    }
}

impl Detector for HeuristicDetector {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn classify(&self, input: &ClassificationInput) -> Result<Classification, DetectorError> {
        Ok(self.classify_text(&input.text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(text: &str) -> Verdict {
        HeuristicDetector::builtin().classify_text(text).label
    }

    #[test]
    fn builtin_lexicon_has_required_phrases() {
        let lex = Lexicon::builtin();
        for p in [
            "todo",
            "fixme",
            "hack",
            "workaround",
            "temporary",
            "technical debt",
            "refactor",
            "kludge",
            "obsolete",
            "band-aid",
        ] {
            assert!(lex.phrases().iter().any(|x| x == p), "missing {p}");
        }
    }

    #[test]
    fn examples() {
        assert_eq!(verdict("TODO: I believe the following code is obsolete"), Verdict::Td);
        assert_eq!(verdict(""), Verdict::NonTd);
        assert_eq!(verdict("Add dark mode toggle to settings page"), Verdict::NonTd);
        assert_eq!(verdict("this is a temporary hack"), Verdict::Td);
        assert_eq!(verdict("We carry TECHNICAL \n DEBT"), Verdict::Td);
        assert_eq!(verdict("We carry Technical Debt here"), Verdict::Td);
    }

    #[test]
    fn word_boundaries() {
        assert_eq!(verdict("the hackathon starts"), Verdict::NonTd);
        assert_eq!(verdict("photodocument"), Verdict::NonTd);
        assert_eq!(verdict("(FIXME)"), Verdict::Td);
        assert_eq!(verdict("a band-aid."), Verdict::Td);
    }

    #[test]
    fn confidence_is_fixed() {
        let d = HeuristicDetector::builtin();
        assert_eq!(d.classify_text("todo").confidence(), Some(0.5));
        assert_eq!(d.classify_text("fine").confidence(), Some(0.5));
    }

    #[test]
    fn parse_skips_comments_and_blank_lines() {
        let lex = Lexicon::parse("# c\n\n  Foo Bar \n#x\nbaz\n");
        assert_eq!(lex.phrases(), &["foo bar".to_string(), "baz".to_string()]);
        assert!(Lexicon::parse("# only comments").find("anything").is_none());
    }
}
