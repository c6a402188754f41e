use std::io::{BufRead, Write};

use tod_core::orchestrator::{TurnAddress, TurnTrace};
use tod_core::response::lexicalize;
use tod_core::DialogueState;

use crate::config::RunConfig;
use crate::error::{data_err, CliResult};

#[derive(Debug, Clone, Copy, Default)]
pub struct ChatOptions {
    pub trace: bool,
    /// Print delexicalized responses as the model produced them.
    pub raw: bool,
}

fn print_trace(out: &mut impl Write, t: &TurnTrace) -> std::io::Result<()> {
    if let Some(i) = &t.intent {
        writeln!(out, "  intent: {}", i.tool_name())?;
    }
    if let Some(r) = &t.slot_result {
        writeln!(out, "  slots: {}", r.parameters.to_qualified_json())?;
        if !r.information.is_empty() {
            writeln!(out, "  information: {}", r.information.join(", "))?;
        }
    }
    if let Some(m) = &t.merged_slots {
        writeln!(out, "  tracked: {}", m.to_qualified_json())?;
    }
    if let Some(o) = &t.observation {
        writeln!(out, "  observation:")?;
        for line in o.render().lines() {
            writeln!(out, "    {line}")?;
        }
    }
    if let Some(d) = &t.diagnostics {
        if d.over_limit {
            writeln!(out, "  note: {} words, over the limit", d.word_count)?;
        }
    }
    Ok(())
}

/// Line-oriented session: one user utterance per line, until the dialogue
/// closes or input ends. Stage errors are reported and the session goes on.
pub fn cmd_chat(config: &RunConfig, opts: ChatOptions, input: impl BufRead, mut out: impl Write) -> CliResult<usize> {
    let pipeline = super::pipeline(config)?;
    let backend = super::backend(config, &[], &pipeline.schemas, None)?;
    let mut state = DialogueState::new("chat");
    let mut turns = 0;
    for line in input.lines() {
        let line = line.map_err(data_err)?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let addr = TurnAddress {
            dialogue_id: "chat".into(),
            turn_index: turns,
            last_tool_override: None,
        };
        match pipeline.run_turn(&mut state, text, &backend, &addr) {
            Ok((response, trace)) => {
                turns += 1;
                let shown = match (&trace.observation, opts.raw) {
                    (Some(o), false) => lexicalize(&response, o),
                    _ => response.clone(),
                };
                writeln!(out, "system: {shown}").map_err(data_err)?;
                if opts.trace {
                    print_trace(&mut out, &trace).map_err(data_err)?;
                }
            }
            Err(e) => {
                writeln!(out, "error: {} stage failed: {}", e.stage, e.cause).map_err(data_err)?;
                if opts.trace {
                    print_trace(&mut out, &e.trace).map_err(data_err)?;
                }
            }
        }
        if state.ended() {
            break;
        }
    }
    Ok(turns)
}
