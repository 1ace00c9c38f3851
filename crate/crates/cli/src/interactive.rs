//! The terminal question-and-answer loop behind `ddx diagnose`.

use std::io::{BufRead, Write};

use anyhow::Result;
use ddx_core::session::TranscriptEvent;
use ddx_core::{Decision, Evidence, QmrNetwork, Session, SessionConfig};

const HELP: &str = "answers: y (present), n (absent), s (skip)
commands: !set <finding> <y|n|?>   change any finding without using a question
          !stop                    diagnose now
          !help                    this text";

struct Style {
    color: bool,
}

impl Style {
    fn bold(&self, s: &str) -> String {
        if self.color {
            format!("\x1b[1m{s}\x1b[0m")
        } else {
            s.to_string()
        }
    }

    fn dim(&self, s: &str) -> String {
        if self.color {
            format!("\x1b[2m{s}\x1b[0m")
        } else {
            s.to_string()
        }
    }
}

enum Input {
    Answer(Option<bool>),
    Set(String, Option<bool>),
    Stop,
    Help,
    Unknown(String),
}

fn parse_value(s: &str) -> Option<Option<bool>> {
    match s.to_ascii_lowercase().as_str() {
        "y" | "yes" => Some(Some(true)),
        "n" | "no" => Some(Some(false)),
        "?" | "s" | "skip" => Some(None),
        _ => None,
    }
}

fn parse(line: &str) -> Input {
    let line = line.trim();
    if let Some(rest) = line.strip_prefix("!set ") {
        let rest = rest.trim();
        return match rest.rsplit_once(char::is_whitespace) {
            Some((name, v)) => match parse_value(v) {
                Some(value) => Input::Set(name.trim().to_string(), value),
                None => Input::Unknown(line.to_string()),
            },
            None => Input::Unknown(line.to_string()),
        };
    }
    match line {
        "!stop" => Input::Stop,
        "!help" | "?help" => Input::Help,
        other => parse_value(other).map_or_else(|| Input::Unknown(other.to_string()), Input::Answer),
    }
}

fn print_ranking(out: &mut impl Write, session: &Session<'_>, k: usize, style: &Style) -> Result<()> {
    let post = session.posterior();
    let net = session.network();
    if post.degenerate {
        writeln!(out, "{}", style.dim("(the evidence rules out every disease; showing priors)"))?;
    }
    for (i, (d, p)) in post.ranking().into_iter().take(k).enumerate() {
        writeln!(out, "  {:>2}. {:<40} {:>7.2}%", i + 1, net.disease_name(d), 100.0 * p)?;
    }
    Ok(())
}

/// Run a diagnosis dialogue over `input`/`out` and return the transcript.
///
/// End of input is treated like `!stop`.
pub fn run(
    net: &QmrNetwork,
    config: SessionConfig,
    initial: Evidence,
    mut input: impl BufRead,
    mut out: impl Write,
    color: bool,
) -> Result<Vec<TranscriptEvent>> {
    let style = Style { color };
    let top_k = config.top_k;
    let mut session = Session::create(net, config, initial)?;
    writeln!(out, "{}", style.bold("Current differential:"))?;
    print_ranking(&mut out, &session, top_k, &style)?;

    let mut line = String::new();
    while session.is_active() {
        let suggestion = match session.next_suggestion()? {
            Decision::Suggest(s) => s,
            Decision::Diagnose { reason } => {
                writeln!(out, "{}", style.dim(&format!("stopping: {reason}")))?;
                break;
            }
        };
        let name = net.finding_name(suggestion.finding);
        write!(
            out,
            "{} {} {} ",
            style.bold(&format!("Q{}.", session.step() + 1)),
            format_args!("{name}?"),
            style.dim(&format!("[y/n/s, utility {:.4}]", suggestion.utility)),
        )?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            break;
        }
        let result = match parse(&line) {
            Input::Answer(Some(v)) => session.answer(suggestion.finding, v),
            Input::Answer(None) => session.skip(suggestion.finding),
            Input::Set(name, value) => match net.finding_id(&name) {
                Some(f) => session.override_finding(f, value),
                None => {
                    writeln!(out, "unknown finding {name:?}")?;
                    continue;
                }
            },
            Input::Stop => break,
            Input::Help => {
                writeln!(out, "{HELP}")?;
                continue;
            }
            Input::Unknown(s) => {
                writeln!(out, "didn't understand {s:?}; type !help")?;
                continue;
            }
        };
        match result {
            Ok(()) => print_ranking(&mut out, &session, top_k, &style)?,
            Err(e) => writeln!(out, "{e}")?,
        }
    }

    let diagnosis = session.finalize()?.clone();
    writeln!(
        out,
        "{} {}",
        style.bold("Diagnosis"),
        style.dim(&format!("after {} question(s), {}:", diagnosis.steps, diagnosis.reason))
    )?;
    for (i, r) in diagnosis.ranked.iter().enumerate() {
        writeln!(out, "  {:>2}. {:<40} {:>7.2}%", i + 1, net.disease_name(r.disease), 100.0 * r.prob)?;
    }
    out.flush()?;
    Ok(session.transcript().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_commands() {
        assert!(matches!(parse("Y\n"), Input::Answer(Some(true))));
        assert!(matches!(parse(" no "), Input::Answer(Some(false))));
        assert!(matches!(parse("s"), Input::Answer(None)));
        assert!(matches!(parse("!stop"), Input::Stop));
        match parse("!set Sharp abdominal pain n") {
            Input::Set(name, v) => {
                assert_eq!(name, "Sharp abdominal pain");
                assert_eq!(v, Some(false));
            }
            _ => panic!(),
        }
        assert!(matches!(parse("!set Back pain maybe"), Input::Unknown(_)));
        assert!(matches!(parse("!set x"), Input::Unknown(_)));
        assert!(matches!(parse("perhaps"), Input::Unknown(_)));
    }
}
