//! Line-oriented operator loop. Plain lines are instructions; lines starting
//! with `:` are commands.

use std::io::{self, BufRead, Write};
use std::path::Path;

use semem_core::engine::{Engine, EngineError};
use semem_core::executor::Step;
use semem_core::nlparse::Strategy;
use semem_core::perception::parse_scene_document;
use semem_core::persistence;
use semem_core::session::Choice;
use semem_core::transcript;

const HELP: &str = "\
instructions: type a sentence, e.g. `YuMi, pick the screw!`
commands:
  :yes | :no                  accept or reject a proposed object
  :new <label> [parent]       label an unknown object as a new type
  :is <type>                  label an unknown object as a known type
  :discard                    ignore an unknown object
  :link <type>                reuse the action defined for <type>
  :teach <skill> <steps-json> record a skill and bind the action to it
  :decline                    leave the action undefined
  :answer <choice-json>       answer the open prompt with raw JSON
  :prompt                     show the open prompt
  :scene <path>               ingest a scene document
  :reset                      drop the scene
  :graph                      list scene instances
  :log                        list executions
  :strategy heuristic|triplet switch parser
  :save <path>                save the prior graph
  :help | :quit";

pub fn print_lines(out: &mut impl Write, lines: &[String]) -> io::Result<()> {
    for l in lines {
        writeln!(out, "{l}")?;
    }
    Ok(())
}

pub fn run(engine: &mut Engine, input: impl BufRead, out: &mut impl Write, interactive: bool) -> io::Result<()> {
    let mut lines = input.lines();
    loop {
        if interactive {
            write!(out, "semem> ")?;
            out.flush()?;
        }
        let Some(line) = lines.next() else { break };
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.strip_prefix(':') {
            Some(cmd) => match command(engine, cmd) {
                Ok(Flow::Quit) => break,
                Ok(Flow::Print(ls)) => print_lines(out, &ls)?,
                Err(msg) => writeln!(out, "error: {msg}")?,
            },
            None => match engine.instruct(line, None) {
                Ok(o) => print_lines(out, &transcript::instruction(line, &o))?,
                Err(EngineError::Parse(e)) => writeln!(out, "error: {}: {e}", e.code())?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
        }
    }
    Ok(())
}

enum Flow {
    Print(Vec<String>),
    Quit,
}

fn answer(engine: &mut Engine, choice: Choice) -> Result<Flow, String> {
    let id = engine.open_prompt().map(|p| p.id).ok_or("no prompt is open")?;
    let out = engine.answer(id, choice.clone()).map_err(|e| e.to_string())?;
    Ok(Flow::Print(transcript::answer(&choice, &out)))
}

fn command(engine: &mut Engine, cmd: &str) -> Result<Flow, String> {
    let (word, rest) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
    let rest = rest.trim();
    let args: Vec<&str> = rest.split_whitespace().collect();
    match (word, args.as_slice()) {
        ("quit" | "q" | "exit", _) => Ok(Flow::Quit),
        ("help" | "h", _) => Ok(Flow::Print(vec![HELP.to_string()])),
        ("yes" | "y", []) => answer(engine, Choice::Confirm { accept: true }),
        ("no" | "n", []) => answer(engine, Choice::Confirm { accept: false }),
        ("new", [label]) => answer(
            engine,
            Choice::NewType {
                label: label.to_string(),
                parent: None,
                slots: None,
            },
        ),
        ("new", [label, parent]) => answer(
            engine,
            Choice::NewType {
                label: label.to_string(),
                parent: Some(parent.to_string()),
                slots: None,
            },
        ),
        ("is", [ty]) => answer(engine, Choice::ExistingType { label: ty.to_string() }),
        ("discard", []) => answer(engine, Choice::Discard),
        ("link", [ty]) => answer(engine, Choice::LinkAction { object_type: ty.to_string() }),
        ("decline", []) => answer(engine, Choice::Decline),
        ("teach", [skill, ..]) => {
            let json = rest[skill.len()..].trim();
            let steps: Vec<Step> = if json.is_empty() {
                Vec::new()
            } else {
                serde_json::from_str(json).map_err(|e| format!("steps: {e}"))?
            };
            answer(
                engine,
                Choice::TeachAction {
                    skill: skill.to_string(),
                    steps,
                },
            )
        }
        ("answer", [_, ..]) => {
            let choice: Choice = serde_json::from_str(rest).map_err(|e| format!("choice: {e}"))?;
            answer(engine, choice)
        }
        ("prompt", []) => Ok(Flow::Print(vec![engine
            .open_prompt()
            .map_or_else(|| "no prompt is open".to_string(), transcript::prompt)])),
        ("scene", [_, ..]) => {
            let text = std::fs::read_to_string(rest).map_err(|e| format!("{rest}: {e}"))?;
            let obs = parse_scene_document(&text).map_err(|e| e.to_string())?;
            let o = engine.ingest(&obs).map_err(|e| e.to_string())?;
            Ok(Flow::Print(transcript::ingest(&o)))
        }
        ("reset", []) => {
            let n = engine.reset_scene();
            Ok(Flow::Print(vec![format!("scene cleared ({n} nodes)")]))
        }
        ("graph", []) => {
            let g = &engine.world().graph;
            let mut lines = vec![format!("types: {}", g.type_labels().join(", "))];
            for id in g.instances() {
                let n = g.node(id).expect("live");
                let ty = g.instance_type(id).and_then(|t| g.type_label(t)).unwrap_or("?");
                let props: Vec<String> = g
                    .slots(id)
                    .into_iter()
                    .filter_map(|(name, _)| g.slot_value(id, &name).map(|v| format!("{name}={v}")))
                    .collect();
                lines.push(format!("{} ({ty}) {}", n.label, props.join(" ")));
            }
            Ok(Flow::Print(lines))
        }
        ("log", []) => Ok(Flow::Print(
            engine.execution_log().iter().map(transcript::execution).collect(),
        )),
        ("strategy", [s]) => {
            let s: Strategy = s.parse()?;
            engine.set_strategy(s);
            Ok(Flow::Print(vec![format!("strategy {s}")]))
        }
        ("save", [_, ..]) => {
            let n = persistence::save_to_path(engine.world(), false, Path::new(rest)).map_err(|e| e.to_string())?;
            Ok(Flow::Print(vec![format!("saved {n} bytes to {rest}")]))
        }
        _ => Err(format!("unknown command `:{cmd}` (try :help)")),
    }
}
