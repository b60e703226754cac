//! Word-timed transcripts as `start<TAB>end<TAB>token` lines.

use std::path::Path;

use gesture_core::embedding::{TimedToken, TimedTranscript};

use crate::error::{parse_err, Error, Result};

pub fn parse_transcript(text: &str) -> Result<TimedTranscript> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(s), Some(e), Some(tok)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(i + 1, "expected `start<TAB>end<TAB>token`"));
        };
        let time = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(|| parse_err(i + 1, format!("bad time `{v}`")))
        };
        let (start, end) = (time(s)?, time(e)?);
        if start > end {
            return Err(parse_err(i + 1, format!("token starts at {start} after it ends at {end}")));
        }
        tokens.push(TimedToken {
            text: tok.to_string(),
            start,
            end,
        });
    }
    Ok(TimedTranscript::new(tokens)?)
}

pub fn write_transcript(t: &TimedTranscript) -> String {
    t.tokens()
        .iter()
        .map(|tok| format!("{}\t{}\t{}\n", tok.start, tok.end, tok.text))
        .collect()
}

pub fn load_transcript(path: &Path) -> Result<TimedTranscript> {
    parse_transcript(&crate::error::read_text(path)?).map_err(|e| match e {
        Error::Parse { line, message } => Error::Format(format!("{}:{line}: {message}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_sorts() {
        let t = parse_transcript("0.5\t0.9\tworld\n\n0.1\t0.4\thello there\n").unwrap();
        let words: Vec<&str> = t.tokens().iter().map(|k| k.text.as_str()).collect();
        assert_eq!(words, ["hello there", "world"]);
        assert_eq!(parse_transcript(&write_transcript(&t)).unwrap(), t);
    }

    #[test]
    fn reports_line_numbers() {
        assert!(matches!(parse_transcript("0\t1\ta\n2\t1\tb\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_transcript("0 1 a\n"), Err(Error::Parse { line: 1, .. })));
    }
}
