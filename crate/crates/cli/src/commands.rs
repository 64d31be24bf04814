use std::path::Path;
use std::time::{Duration, Instant};

use congen::checker::{score_posterior, Candidate};
use congen::constraints::{words, CnfConstraint, InflectionLexicon};
use congen::decode::{beam, constrained_beam, greedy, smc, DecodeConfig, Hypothesis};
use congen::eval::{load_dataset, run_suite, EvalError};
use congen::geometry::{train, verify};
use congen::lm::{sequence_logprob, HttpLm, LmBackend, LmError, NgramLm, TokenId};
use congen::ontology::{violation_probability, Gazetteer, Ontology};
use congen::prompt::{build_abs, build_cnf, load_shots, rewrite_query, ShotExample};
use congen::repair::{default_budget, repair_lexical, reprompt_payload};
use serde_json::{json, Value};

use crate::config::{BackendConfig, RunConfig, Strategy, Style};
use crate::{CliError, Command, ConstraintArgs};

type Lm = Box<dyn LmBackend>;

pub(crate) fn dispatch(command: &Command, cfg: &RunConfig) -> Result<String, CliError> {
    let value = match command {
        Command::Gen { constraint, .. } => gen(cfg, constraint)?,
        Command::Eval { .. } => eval(cfg)?,
        Command::Check { constraint, texts, semantic, .. } => check(cfg, constraint, texts, *semantic)?,
        Command::Repair { constraint, text, budget, question } => {
            repair(cfg, constraint, text, *budget, question.as_deref())?
        }
        Command::Reason { question, text, .. } => reason(cfg, question.as_deref(), text.as_deref())?,
        Command::Embed { .. } => embed(cfg)?,
    };
    Ok(serde_json::to_string_pretty(&value).expect("json output"))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn load_backend(cfg: &RunConfig) -> Result<Lm, CliError> {
    match &cfg.backend {
        BackendConfig::Ngram(n) => {
            let text = std::fs::read_to_string(&n.corpus)
                .map_err(|e| CliError::Config(format!("backend.ngram.corpus {}: {e}", n.corpus.display())))?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            Ok(Box::new(NgramLm::build(&lines, n.order, n.lambda)?))
        }
        BackendConfig::Http(h) => {
            let lm = HttpLm::connect(&h.url, Duration::from_secs_f64(h.timeout_secs))?.with_retries(h.retries);
            Ok(Box::new(lm))
        }
    }
}

fn load_lexicon(cfg: &RunConfig) -> Result<InflectionLexicon, CliError> {
    InflectionLexicon::load(&cfg.paths.lexicon).map_err(|e| CliError::Config(format!("paths.lexicon: {e}")))
}

fn load_ontology(cfg: &RunConfig) -> Result<Ontology, CliError> {
    let path = cfg.paths.ontology.as_ref().ok_or_else(|| CliError::Config("paths.ontology is not set".into()))?;
    Ontology::load(path).map_err(|e| CliError::Ontology(e.to_string()))
}

fn load_gazetteer(cfg: &RunConfig) -> Result<Gazetteer, CliError> {
    match &cfg.paths.gazetteer {
        Some(path) => Gazetteer::load(path).map_err(|e| CliError::Ontology(e.to_string())),
        None => Ok(Gazetteer::new()),
    }
}

fn load_prompt_shots(cfg: &RunConfig, lex: &InflectionLexicon) -> Result<Vec<ShotExample>, CliError> {
    let n = cfg.prompt.n_shots;
    if n == 0 {
        return Ok(Vec::new());
    }
    let path = cfg.prompt.shots.as_ref().expect("validated");
    let mut shots = load_shots(path, lex).map_err(|e| CliError::Config(format!("prompt.shots: {e}")))?;
    if shots.len() < n {
        return Err(CliError::Config(format!(
            "prompt.n_shots is {n} but {} has only {} shots",
            path.display(),
            shots.len()
        )));
    }
    shots.truncate(n);
    Ok(shots)
}

fn resolve_constraint(
    args: &ConstraintArgs,
    lex: &InflectionLexicon,
) -> Result<(CnfConstraint, Vec<String>), CliError> {
    if let Some(spec) = &args.constraint {
        let c = CnfConstraint::parse(spec).map_err(|e| CliError::Config(format!("--constraint: {e}")))?;
        let keywords = c
            .clauses()
            .iter()
            .filter(|k| k.is_positive())
            .filter_map(|k| k.forms().next().map(str::to_owned))
            .collect();
        return Ok((c, keywords));
    }
    if args.keywords.is_empty() {
        return Err(CliError::Config("give --keywords or --constraint".into()));
    }
    let keywords: Vec<String> = args.keywords.iter().map(|k| k.trim().to_lowercase()).collect();
    let c = CnfConstraint::from_keywords(&keywords, lex).map_err(|e| CliError::Config(format!("--keywords: {e}")))?;
    Ok((c, keywords))
}

fn build_prompt(
    style: Style,
    c: &CnfConstraint,
    keywords: &[String],
    shots: &[ShotExample],
) -> Result<String, CliError> {
    match style {
        Style::Abs => Ok(build_abs(keywords, shots)),
        Style::Cnf => build_cnf(c, shots).map_err(|e| CliError::Config(e.to_string())),
    }
}

/// Word-level n-gram models cannot read the instruction text, so they
/// start from bos; remote models get the whole prompt.
fn prompt_ids(cfg: &RunConfig, lm: &dyn LmBackend, prompt: &str) -> Result<Vec<TokenId>, LmError> {
    match cfg.backend {
        BackendConfig::Ngram(_) => Ok(Vec::new()),
        BackendConfig::Http(_) => lm.tokenize(prompt),
    }
}

fn decode(
    lm: &dyn LmBackend,
    prompt: &[TokenId],
    c: &CnfConstraint,
    strategy: Strategy,
    dc: &DecodeConfig,
) -> Result<Hypothesis, CliError> {
    let hyp = match strategy {
        Strategy::Greedy => greedy(lm, prompt, dc)?,
        Strategy::Beam => beam(lm, prompt, dc)?.swap_remove(0),
        Strategy::Nl => constrained_beam(lm, prompt, c, dc)?,
        Strategy::Smc => smc(lm, prompt, c, dc)?.best,
        Strategy::Echo => return Err(CliError::Config("strategy echo only works with eval".into())),
    };
    Ok(hyp)
}

fn text_of(lm: &dyn LmBackend, ids: &[TokenId]) -> Result<String, LmError> {
    let body: Vec<TokenId> = ids.iter().copied().filter(|&t| t != lm.eos()).collect();
    lm.detokenize(&body)
}

fn gen(cfg: &RunConfig, args: &ConstraintArgs) -> Result<Value, CliError> {
    let lex = load_lexicon(cfg)?;
    let (c, keywords) = resolve_constraint(args, &lex)?;
    let shots = load_prompt_shots(cfg, &lex)?;
    let lm = load_backend(cfg)?;
    let prompt = build_prompt(cfg.prompt.style, &c, &keywords, &shots)?;
    let start = Instant::now();
    let ids = prompt_ids(cfg, lm.as_ref(), &prompt)?;
    let hyp = decode(lm.as_ref(), &ids, &c, cfg.strategy, &cfg.decode)?;
    let text = text_of(lm.as_ref(), &hyp.ids)?;
    let seconds = start.elapsed().as_secs_f64();
    let state = c.evaluate_text(&text);
    Ok(json!({
        "strategy": cfg.strategy,
        "style": cfg.prompt.style,
        "constraint": c.to_string(),
        "prompt": prompt,
        "text": text,
        "ids": hyp.ids,
        "logprob": hyp.logprob,
        "coverage": 100.0 * state.coverage(),
        "satisfied": state.is_satisfied(),
        "finished": hyp.finished,
        "seconds": seconds,
        "seed": cfg.decode.seed,
    }))
}

fn eval(cfg: &RunConfig) -> Result<Value, CliError> {
    let lex = load_lexicon(cfg)?;
    let path = cfg.paths.dataset.as_ref().ok_or_else(|| CliError::Config("paths.dataset is not set".into()))?;
    let mut rows = load_dataset(path).map_err(|e| match e {
        EvalError::Io(..) => CliError::Config(format!("paths.dataset: {e}")),
        e => CliError::Data(e.to_string()),
    })?;
    if let Some(limit) = cfg.eval.limit {
        rows.truncate(limit);
    }
    let shots = load_prompt_shots(cfg, &lex)?;
    let lm = match cfg.strategy {
        Strategy::Echo => None,
        _ => Some(load_backend(cfg)?),
    };
    let pipeline = |i: usize, row: &congen::eval::DatasetRow| -> Result<String, String> {
        let Some(lm) = &lm else {
            return row.references.first().cloned().ok_or_else(|| "row has no references".to_owned());
        };
        let c = row.constraint(&lex).map_err(|e| e.to_string())?;
        let prompt = build_prompt(cfg.prompt.style, &c, &row.concept_set, &shots).map_err(|e| e.to_string())?;
        let ids = prompt_ids(cfg, lm.as_ref(), &prompt).map_err(|e| e.to_string())?;
        let dc = DecodeConfig { seed: cfg.decode.seed.wrapping_add(i as u64), ..cfg.decode.clone() };
        let hyp = decode(lm.as_ref(), &ids, &c, cfg.strategy, &dc).map_err(|e| e.to_string())?;
        text_of(lm.as_ref(), &hyp.ids).map_err(|e| e.to_string())
    };
    let report = run_suite(&rows, &lex, pipeline).map_err(|e| CliError::Data(e.to_string()))?;

    let out = &cfg.paths.output;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let json_path = out.join("eval_report.json");
    std::fs::write(&json_path, report.to_json() + "\n").map_err(|e| io_err(&json_path, e))?;
    let label = format!("{:?}/{:?}/{}-shot", cfg.strategy, cfg.prompt.style, cfg.prompt.n_shots).to_lowercase();
    let table_path = out.join("eval_table.txt");
    std::fs::write(&table_path, report.text_table(&label)).map_err(|e| io_err(&table_path, e))?;

    if report.failure_rate() > cfg.eval.max_failure_rate {
        return Err(CliError::EvalThreshold {
            failures: report.aggregate.failures,
            rows: report.rows.len(),
            max_rate: cfg.eval.max_failure_rate,
        });
    }
    Ok(json!({
        "report": json_path,
        "table": table_path,
        "aggregate": report.aggregate,
    }))
}

fn sentence_logprob(lm: &dyn LmBackend, text: &str) -> Result<(Vec<TokenId>, f64), CliError> {
    match lm.tokenize(text) {
        Ok(ids) => {
            let lp = sequence_logprob(lm, &[], &ids, true)?;
            Ok((ids, lp))
        }
        Err(LmError::OutOfVocabulary(_)) => Ok((Vec::new(), f64::NEG_INFINITY)),
        Err(e) => Err(e.into()),
    }
}

fn check(cfg: &RunConfig, args: &ConstraintArgs, texts: &[String], semantic: bool) -> Result<Value, CliError> {
    let lex = load_lexicon(cfg)?;
    let (c, _) = resolve_constraint(args, &lex)?;
    let lm = load_backend(cfg)?;
    let mut candidates = Vec::with_capacity(texts.len());
    for t in texts {
        let (ids, lp) = sentence_logprob(lm.as_ref(), t)?;
        candidates.push(Candidate { ids, text: t.clone(), lm_logprob: lp });
    }
    let kb = if semantic { Some((load_ontology(cfg)?, load_gazetteer(cfg)?)) } else { None };
    let scored = score_posterior(&candidates, &c, kb.as_ref().map(|(o, g)| (o, g)), cfg.checker.lambda)
        .map_err(|e| CliError::Ontology(e.to_string()))?;
    let mut out = Vec::with_capacity(scored.len());
    for s in &scored {
        let state = c.evaluate_text(&s.text);
        let clause = |k: usize| c.clauses()[k].forms().collect::<Vec<_>>().join("|");
        let mut entry = json!({
            "candidate": s,
            "unmet": state.unmet_positive().into_iter().map(clause).collect::<Vec<_>>(),
            "forbidden_used": state.violated_forbid().into_iter().map(clause).collect::<Vec<_>>(),
        });
        if let Some((o, g)) = &kb {
            let report = violation_probability(&words(&s.text), o, g).map_err(|e| CliError::Ontology(e.to_string()))?;
            entry["semantic"] = json!(report);
        }
        out.push(entry);
    }
    Ok(json!({
        "constraint": c.to_string(),
        "lambda": cfg.checker.lambda,
        "candidates": out,
    }))
}

fn repair(
    cfg: &RunConfig,
    args: &ConstraintArgs,
    text: &str,
    budget: Option<usize>,
    question: Option<&str>,
) -> Result<Value, CliError> {
    let lex = load_lexicon(cfg)?;
    let (c, _) = resolve_constraint(args, &lex)?;
    let lm = load_backend(cfg)?;
    let ws = words(text);
    let budget = budget.unwrap_or_else(|| default_budget(&ws, &c));
    let result = repair_lexical(&ws, &c, lm.as_ref(), budget).map_err(|e| match e {
        congen::repair::RepairError::Lm(e) => CliError::Backend(e),
        e => CliError::Data(e.to_string()),
    })?;
    let repaired = result.words.join(" ");
    let mut out = json!({
        "constraint": c.to_string(),
        "original": text,
        "text": repaired,
        "budget": budget,
        "edits": result.edits.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "result": result,
    });
    if let Some(q) = question {
        out["reprompt"] = json!(reprompt_payload(q, &repaired, text));
    }
    Ok(out)
}

fn reason(cfg: &RunConfig, question: Option<&str>, text: Option<&str>) -> Result<Value, CliError> {
    let o = load_ontology(cfg)?;
    let (consistent, violations) = o.is_consistent();
    let closure = o.closure();
    let minimal = o.minimal_axioms().map_err(|e| CliError::Ontology(e.to_string()))?;
    let show = |o: &Ontology| o.axioms().iter().map(ToString::to_string).collect::<Vec<_>>();
    let mut out = json!({
        "consistent": consistent,
        "violations": violations,
        "closure": show(&closure),
        "minimal_axioms": show(&minimal),
    });
    if question.is_some() || text.is_some() {
        let g = load_gazetteer(cfg)?;
        if let Some(q) = question {
            out["rewritten_query"] = json!(rewrite_query(q, &o, &g));
        }
        if let Some(t) = text {
            let report = violation_probability(&words(t), &o, &g).map_err(|e| CliError::Ontology(e.to_string()))?;
            out["text_check"] = json!(report);
        }
    }
    Ok(out)
}

fn embed(cfg: &RunConfig) -> Result<Value, CliError> {
    let o = load_ontology(cfg)?;
    let result = train(&o, &cfg.geometry).map_err(|e| CliError::Geometry(e.to_string()))?;
    let report = verify(&result.embedding, &o);
    let out = &cfg.paths.output;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let path = out.join("embedding.json");
    result.embedding.save(&path).map_err(|e| CliError::Geometry(e.to_string()))?;
    Ok(json!({
        "embedding": path,
        "seed": cfg.geometry.seed,
        "steps": result.steps,
        "final_loss": result.trace.last(),
        "trace": result.trace,
        "verify": report,
    }))
}
