//! Scripted, deterministic runs of the engine.
//!
//! A scenario names a prior-graph document and a scene document (paths
//! relative to the scenario file) and lists steps: instructions, answers to
//! whatever prompt is open, and expectations about the result. The run
//! produces a transcript and stops at the first unmet expectation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EngineConfig, EngineError};
use crate::nlparse::{Lexicon, LexiconError, Parser, Strategy};
use crate::perception::{parse_scene_document, SceneDocError};
use crate::persistence::{self, PersistError};
use crate::session::{Choice, PromptKind};
use crate::transcript;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub prior_graph: PathBuf,
    pub scene: PathBuf,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub strategy: Option<Strategy>,
    pub script: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptStep {
    Instruct(String),
    /// Answers the prompt that is currently open.
    Answer(Choice),
    /// Ingests another scene document on top of the current scene.
    Ingest(PathBuf),
    ResetScene,
    /// The label was removed by an execution and is gone from the scene.
    ExpectRemoved(String),
    /// The label is a live scene instance.
    ExpectPresent(String),
    /// The label names a prior type.
    ExpectType(String),
    /// The open prompt has this kind.
    ExpectPrompt(PromptKind),
    /// The last instruction or answer ended in this resolution variant, or
    /// failed with this parse error code.
    ExpectOutcome(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario `{path}` at line {line}, column {column} (`{field}`): {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("prior graph `{path}`: {source}")]
    Prior { path: PathBuf, source: PersistError },
    #[error("scene `{path}`: {source}")]
    Scene { path: PathBuf, source: SceneDocError },
    #[error("lexicon `{path}`: {source}")]
    Lexicon { path: PathBuf, source: LexiconError },
}

pub struct Replay {
    pub transcript: Vec<String>,
    /// First unmet expectation or fatal step error.
    pub failure: Option<String>,
    pub engine: Engine,
}

impl Replay {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn transcript_text(&self) -> String {
        let mut s = self.transcript.join("\n");
        s.push('\n');
        s
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_scenario(path: &Path, text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Malformed {
        path: path.to_path_buf(),
        line: e.inner().line(),
        column: e.inner().column(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    parse_scenario(path, &read(path)?)
}

fn load_scene(path: &Path) -> Result<Vec<crate::perception::Observation>, ScenarioError> {
    parse_scene_document(&read(path)?).map_err(|source| ScenarioError::Scene {
        path: path.to_path_buf(),
        source,
    })
}

fn display_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Loads and runs a scenario file. Startup problems (missing or malformed
/// files) are errors; everything after that is reported in the [`Replay`].
pub fn run_file(path: &Path) -> Result<Replay, ScenarioError> {
    let scenario = load_scenario(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    run(&scenario, base)
}

pub fn run(scenario: &Scenario, base: &Path) -> Result<Replay, ScenarioError> {
    let prior_path = base.join(&scenario.prior_graph);
    let world = persistence::load_from_path(&prior_path).map_err(|source| ScenarioError::Prior {
        path: prior_path.clone(),
        source,
    })?;
    let parser = match &scenario.lexicon {
        Some(p) => {
            let p = base.join(p);
            let lexicon = Lexicon::from_json(&read(&p)?).map_err(|source| ScenarioError::Lexicon { path: p, source })?;
            Parser::new(lexicon)
        }
        None => Parser::default(),
    };
    let scene_path = base.join(&scenario.scene);
    let scene = load_scene(&scene_path)?;
    // load every scene up front so a bad path fails before the run starts
    let mut extra_scenes = Vec::new();
    for step in &scenario.script {
        if let ScriptStep::Ingest(p) = step {
            let p = base.join(p);
            extra_scenes.push((display_name(&p), load_scene(&p)?));
        }
    }
    let mut extra_scenes = extra_scenes.into_iter();

    let config = EngineConfig {
        strategy: scenario.strategy.unwrap_or_default(),
        ..Default::default()
    };
    let mut r = Runner {
        engine: Engine::new(world, parser, config),
        transcript: Vec::new(),
        last_outcome: None,
        removed: BTreeSet::new(),
    };
    if let Some(name) = &scenario.name {
        r.transcript.push(format!("# {name}"));
    }
    r.transcript.push(format!("== prior {}", display_name(&scenario.prior_graph)));

    let mut failure = r.ingest(&display_name(&scene_path), &scene).err();
    for step in &scenario.script {
        if failure.is_some() {
            break;
        }
        let result = match step {
            ScriptStep::Ingest(_) => {
                let (name, obs) = extra_scenes.next().expect("preloaded");
                r.ingest(&name, &obs)
            }
            other => r.step(other),
        };
        failure = result.err();
    }
    if let Some(f) = &failure {
        r.transcript.push(format!("!! {f}"));
    }
    Ok(Replay {
        transcript: r.transcript,
        failure,
        engine: r.engine,
    })
}

struct Runner {
    engine: Engine,
    transcript: Vec<String>,
    last_outcome: Option<String>,
    removed: BTreeSet<String>,
}

impl Runner {
    fn ingest(&mut self, name: &str, obs: &[crate::perception::Observation]) -> Result<(), String> {
        self.transcript.push(format!("== scene {name}"));
        let out = self.engine.ingest(obs).map_err(|e| format!("ingest {name} failed: {e}"))?;
        self.transcript.extend(transcript::ingest(&out));
        Ok(())
    }

    fn note_executions(&mut self, g: Option<&crate::engine::Grounding>) {
        if let Some(rec) = g.and_then(|g| g.execution.as_ref()) {
            self.removed.extend(rec.scene_delta.removed.iter().cloned());
        }
    }

    fn check(&mut self, what: String, ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
        if ok {
            self.transcript.push(format!("[expect] {what}: ok"));
            Ok(())
        } else {
            self.transcript.push(format!("[expect] {what}: FAILED"));
            Err(format!("expectation `{what}` not met: {}", why()))
        }
    }

    fn step(&mut self, step: &ScriptStep) -> Result<(), String> {
        match step {
            ScriptStep::Instruct(text) => match self.engine.instruct(text, None) {
                Ok(out) => {
                    self.transcript.extend(transcript::instruction(text, &out));
                    self.last_outcome = Some(out.grounding.resolution.variant_name().to_string());
                    self.note_executions(Some(&out.grounding));
                    Ok(())
                }
                Err(EngineError::Parse(e)) => {
                    self.transcript.push(format!("> {text}"));
                    self.transcript.push(format!("[interpretation] error {}: {e}", e.code()));
                    self.last_outcome = Some(e.code().to_string());
                    Ok(())
                }
                Err(e) => {
                    self.transcript.push(format!("> {text}"));
                    Err(format!("instruction `{text}` failed: {e}"))
                }
            },
            ScriptStep::Answer(choice) => {
                let id = self
                    .engine
                    .open_prompt()
                    .map(|p| p.id)
                    .ok_or_else(|| format!("no open prompt to answer with `{}`", transcript::choice(choice)))?;
                let out = self
                    .engine
                    .answer(id, choice.clone())
                    .map_err(|e| format!("answer `{}` to prompt {id} failed: {e}", transcript::choice(choice)))?;
                self.transcript.extend(transcript::answer(choice, &out));
                if let Some(g) = &out.grounding {
                    self.last_outcome = Some(g.resolution.variant_name().to_string());
                }
                self.note_executions(out.grounding.as_ref());
                Ok(())
            }
            ScriptStep::Ingest(_) => unreachable!("handled by the caller"),
            ScriptStep::ResetScene => {
                let n = self.engine.reset_scene();
                self.transcript.push(format!("== reset scene ({n} nodes dropped)"));
                Ok(())
            }
            ScriptStep::ExpectRemoved(label) => {
                let live = self.engine.scene_node(label).is_some();
                let removed = self.removed.contains(label);
                self.check(format!("removed {label}"), removed && !live, || {
                    if live {
                        format!("{label} is still in the scene")
                    } else {
                        format!("{label} was never removed by an execution")
                    }
                })
            }
            ScriptStep::ExpectPresent(label) => {
                let live = self.engine.scene_node(label).is_some();
                self.check(format!("present {label}"), live, || format!("{label} is not in the scene"))
            }
            ScriptStep::ExpectType(label) => {
                let known = self.engine.world().graph.find_type(label).is_some();
                self.check(format!("type {label}"), known, || format!("no prior type `{label}`"))
            }
            ScriptStep::ExpectPrompt(kind) => {
                let open = self.engine.open_prompt().map(|p| p.kind());
                self.check(format!("prompt {}", kind.name()), open == Some(*kind), || match open {
                    Some(k) => format!("open prompt is {}", k.name()),
                    None => "no prompt is open".into(),
                })
            }
            ScriptStep::ExpectOutcome(variant) => {
                let last = self.last_outcome.clone();
                self.check(format!("outcome {variant}"), last.as_deref() == Some(variant.as_str()), || {
                    format!("last outcome was {}", last.as_deref().unwrap_or("nothing"))
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_json_shape() {
        let text = r#"{
            "prior_graph": "seed.semem.json",
            "scene": "exp1.scene.json",
            "strategy": "triplet",
            "script": [
                {"instruct": "YuMi, pick the screw!"},
                {"expect_removed": "screw_1"},
                {"expect_prompt": "label_unknown_object"},
                {"answer": {"choice": "new_type", "label": "new_obj"}},
                {"expect_outcome": "resolved"},
                "reset_scene"
            ]
        }"#;
        let s = parse_scenario(Path::new("x.json"), text).unwrap();
        assert_eq!(s.strategy, Some(Strategy::Triplet));
        assert_eq!(s.script.len(), 6);
        assert_eq!(s.script[5], ScriptStep::ResetScene);
    }

    #[test]
    fn malformed_scenario_points_at_the_field() {
        let text = r#"{"prior_graph": "a", "scene": "b", "script": [{"instruct": 3}]}"#;
        let Err(ScenarioError::Malformed { field, .. }) = parse_scenario(Path::new("x.json"), text) else {
            panic!()
        };
        assert_eq!(field, "script[0].instruct");
    }
}
