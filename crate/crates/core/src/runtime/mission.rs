//! Mission scripts: the line-oriented stimulus format for runs.
//!
//! ```text
//! mission patrol_then_rtl
//! input wp 1
//! wait 3
//! setmode GUIDED
//! wait 5
//! hijack disarm_motors at 2
//! corrupt_return at 0
//! setmode RTL
//! wait 4
//! ```
//!
//! `mission NAME` must come first; `#` starts a comment; steps execute in
//! order. `wait N` runs the scheduler entry N times with the current input
//! registers. `input NAME V` sets a register read by the entry function's
//! like-named parameter. The two attack steps arm an injection that fires on
//! the N-th matching event after arming (counting from 0).

use crate::ir::FuncName;

/// One scripted stimulus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MissionStep {
    /// Command a mode change through the module's switcher.
    SetMode(String),
    /// Set an input register consumed by the entry function.
    Input { register: String, value: i64 },
    /// Run the scheduler entry this many iterations.
    Wait(u64),
    /// Arm a control-flow hijack: the N-th indirect transfer after this step
    /// (0-based) is redirected to `target`.
    InjectHijack { target: FuncName, at_call_index: u64 },
    /// Arm a return-address corruption: the N-th checked return after this
    /// step (0-based) pops a corrupted descriptor.
    CorruptReturn { at: u64 },
}

/// A named sequence of steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissionScript {
    pub name: String,
    pub steps: Vec<MissionStep>,
}

/// Mission text rejection, with the 1-based offending line.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct MissionParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> MissionParseError {
    MissionParseError {
        line,
        message: message.into(),
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parse a mission script from its text form.
pub fn parse_mission(text: &str) -> Result<MissionScript, MissionParseError> {
    let mut name: Option<String> = None;
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if name.is_none() {
            let ["mission", n] = tokens[..] else {
                return Err(err(line_no, "expected 'mission NAME' as the first line"));
            };
            if !is_ident(n) {
                return Err(err(line_no, format!("invalid mission name '{n}'")));
            }
            name = Some(n.to_string());
            continue;
        }
        let step = match tokens[..] {
            ["mission", ..] => return Err(err(line_no, "duplicate mission line")),
            ["setmode", m] if is_ident(m) => MissionStep::SetMode(m.to_string()),
            ["input", r, v] if is_ident(r) => MissionStep::Input {
                register: r.to_string(),
                value: v
                    .parse()
                    .map_err(|_| err(line_no, format!("invalid input value '{v}'")))?,
            },
            ["wait", n] => MissionStep::Wait(
                n.parse()
                    .map_err(|_| err(line_no, format!("invalid wait count '{n}'")))?,
            ),
            ["hijack", f, "at", n] if is_ident(f) => MissionStep::InjectHijack {
                target: FuncName::new(f),
                at_call_index: n
                    .parse()
                    .map_err(|_| err(line_no, format!("invalid call index '{n}'")))?,
            },
            ["corrupt_return", "at", n] => MissionStep::CorruptReturn {
                at: n
                    .parse()
                    .map_err(|_| err(line_no, format!("invalid return index '{n}'")))?,
            },
            _ => return Err(err(line_no, format!("unrecognized step '{line}'"))),
        };
        steps.push(step);
    }
    Ok(MissionScript {
        name: name.ok_or_else(|| err(0, "empty mission: no 'mission NAME' line"))?,
        steps,
    })
}

/// Canonical text form; [`parse_mission`] inverts it.
pub fn serialize_mission(mission: &MissionScript) -> String {
    let mut out = format!("mission {}\n", mission.name);
    for step in &mission.steps {
        match step {
            MissionStep::SetMode(m) => out.push_str(&format!("setmode {m}\n")),
            MissionStep::Input { register, value } => {
                out.push_str(&format!("input {register} {value}\n"))
            }
            MissionStep::Wait(n) => out.push_str(&format!("wait {n}\n")),
            MissionStep::InjectHijack {
                target,
                at_call_index,
            } => out.push_str(&format!("hijack {target} at {at_call_index}\n")),
            MissionStep::CorruptReturn { at } => {
                out.push_str(&format!("corrupt_return at {at}\n"))
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_step_kind() {
        let text = "\
# patrol with a mid-flight hijack
mission patrol
input wp 1
input alt -3
wait 2
setmode GUIDED
hijack disarm_motors at 2
corrupt_return at 0
wait 5
";
        let mission = parse_mission(text).unwrap();
        assert_eq!(mission.name, "patrol");
        assert_eq!(mission.steps.len(), 7);
        assert_eq!(
            mission.steps[1],
            MissionStep::Input {
                register: "alt".to_string(),
                value: -3,
            }
        );
        assert_eq!(
            mission.steps[4],
            MissionStep::InjectHijack {
                target: FuncName::new("disarm_motors"),
                at_call_index: 2,
            }
        );
        assert_eq!(mission.steps[5], MissionStep::CorruptReturn { at: 0 });
    }

    #[test]
    fn serialization_round_trips() {
        let mission = MissionScript {
            name: "rt".to_string(),
            steps: vec![
                MissionStep::Input {
                    register: "wp".to_string(),
                    value: 4,
                },
                MissionStep::SetMode("RTL".to_string()),
                MissionStep::Wait(3),
                MissionStep::InjectHijack {
                    target: FuncName::new("disarm"),
                    at_call_index: 1,
                },
                MissionStep::CorruptReturn { at: 2 },
            ],
        };
        let text = serialize_mission(&mission);
        assert_eq!(parse_mission(&text).unwrap(), mission);
        assert_eq!(serialize_mission(&parse_mission(&text).unwrap()), text);
    }

    #[test]
    fn rejects_malformed_scripts() {
        let cases = [
            ("wait 3\n", "expected 'mission NAME'"),
            ("mission a\nmission b\n", "duplicate mission"),
            ("mission a\nloiter 3\n", "unrecognized step"),
            ("mission a\nwait many\n", "invalid wait count"),
            ("mission a\nhijack f at soon\n", "invalid call index"),
            ("mission a\ninput wp high\n", "invalid input value"),
            ("", "no 'mission NAME' line"),
        ];
        for (text, fragment) in cases {
            let err = parse_mission(text).unwrap_err();
            assert!(
                err.to_string().contains(fragment),
                "{text:?}: expected {fragment:?} in {err}"
            );
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "\n# header\nmission m\n\nwait 1  # trailing\n";
        let mission = parse_mission(text).unwrap();
        assert_eq!(mission.steps, vec![MissionStep::Wait(1)]);
    }
}
