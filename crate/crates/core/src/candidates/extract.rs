use super::CandidateError;
use crate::qlang::{Dialect, Program};

/// Source pulled out of a raw completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub source: String,
    /// No fenced block was found; the whole remainder was taken.
    pub unfenced: bool,
    /// Number of fenced blocks seen (only the first is used).
    pub fence_blocks: usize,
    /// A leading `<think>…</think>` block was stripped.
    pub had_think: bool,
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn strip_think(text: &str) -> (&str, bool) {
    let trimmed = text.trim_start();
    if let Some(body) = trimmed.strip_prefix("<think>") {
        if let Some(end) = body.find("</think>") {
            return (&body[end + "</think>".len()..], true);
        }
    }
    (text, false)
}

/// Strip one leading think block, then take the first fenced block.
/// Without a fence, the whole remainder is the source.
pub fn extract_source(completion: &str) -> Result<Extracted, CandidateError> {
    let (rest, had_think) = strip_think(completion);
    let lines: Vec<&str> = rest.lines().collect();
    let fence_idx: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| is_fence(l))
        .map(|(i, _)| i)
        .collect();
    let fence_blocks = fence_idx.len().div_ceil(2);

    let (body, unfenced) = match fence_idx.as_slice() {
        [] => (rest.to_string(), true),
        [open] => (lines[open + 1..].join("\n"), false),
        [open, close, ..] => (lines[open + 1..*close].join("\n"), false),
    };
    let source = body.trim().to_string();
    if source.is_empty() {
        return Err(CandidateError::EmptySource);
    }
    Ok(Extracted {
        source,
        unfenced,
        fence_blocks,
        had_think,
    })
}

pub fn extract_program(
    completion: &str,
    dialect: Dialect,
) -> Result<(Program, Extracted), CandidateError> {
    let extracted = extract_source(completion)?;
    let program = Program::new(dialect, &extracted.source)?;
    Ok((program, extracted))
}

/// Wrap a program in the reasoning-then-code layout.
pub fn format_completion(reasoning: &str, source: &str, dialect: Dialect) -> String {
    let tag = match dialect {
        Dialect::Qlang => "qlang",
        Dialect::Pyqiskit => "python",
    };
    let mut body = source.trim_end().to_string();
    body.push('\n');
    format!(
        "<think>\n{}\n</think>\n```{tag}\n{body}```\n",
        reasoning.trim()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn think_then_fence() {
        let (p, e) =
            extract_program("<think>x</think>\n```\ncircuit qc 1 1\n```", Dialect::Qlang).unwrap();
        assert_eq!(p.statements.len(), 1);
        assert!(e.had_think && !e.unfenced);
        assert_eq!(e.fence_blocks, 1);
    }

    #[test]
    fn fenceless_takes_everything() {
        let e = extract_source("circuit qc 1 1\nh qc 0").unwrap();
        assert!(e.unfenced);
        assert_eq!(e.source, "circuit qc 1 1\nh qc 0");
    }

    #[test]
    fn two_fences_first_wins() {
        let e = extract_source("```\nh qc 0\n```\ntext\n```\nx qc 0\n```").unwrap();
        assert_eq!(e.source, "h qc 0");
        assert_eq!(e.fence_blocks, 2);
    }

    #[test]
    fn empty_after_extraction() {
        assert_eq!(
            extract_source("<think>all thought</think>"),
            Err(CandidateError::EmptySource)
        );
        assert_eq!(extract_source("```\n```"), Err(CandidateError::EmptySource));
        assert_eq!(extract_source("   "), Err(CandidateError::EmptySource));
    }

    #[test]
    fn unclosed_fence_runs_to_end() {
        let e = extract_source("```qlang\ncircuit qc 1 0\nh qc 0").unwrap();
        assert_eq!(e.source, "circuit qc 1 0\nh qc 0");
    }

    #[test]
    fn parse_failure_is_reported() {
        assert!(matches!(
            extract_program("```\nbogus\n```", Dialect::Qlang),
            Err(CandidateError::Parse(_))
        ));
        assert!(extract_program("```\nimport qiskit\n```", Dialect::Pyqiskit).is_ok());
    }

    #[test]
    fn formatted_completion_scores_full_format() {
        let c = format_completion("plan", "circuit qc 1 1\n", Dialect::Qlang);
        assert_eq!(crate::verify::format_reward(&c), 1.0);
        assert_eq!(extract_source(&c).unwrap().source, "circuit qc 1 1");
    }

    proptest! {
        #[test]
        fn extraction_is_idempotent(
            think in "[a-z .]{0,20}",
            code in "[a-z0-9 ]{1,10}(\n[a-z0-9 ]{1,10}){0,4}",
            fenced in any::<bool>(),
        ) {
            let completion = if fenced {
                format!("<think>{think}</think>\n```\n{code}\n```")
            } else {
                format!("<think>{think}</think>\n{code}")
            };
            if let Ok(first) = extract_source(&completion) {
                let second = extract_source(&first.source).unwrap();
                prop_assert_eq!(second.source, first.source);
            }
        }
    }
}
